// Builds each track family, writes the oval to its text format and reads it
// back.

use sbrl::geometry::Track;
use sbrl::tracks::{generate_track, TrackGenConfig, TrackKind};

pub fn run_example() -> sbrl::Result<Vec<(TrackKind, f64)>> {
    let mut lengths = Vec::new();
    for kind in [TrackKind::Oval, TrackKind::Figure, TrackKind::RandomCircuit] {
        let cfg = TrackGenConfig { kind, ..TrackGenConfig::default() };
        let track = generate_track(&cfg, 7)?;
        let (left, right) = track.half_widths_at(0.0);
        println!(
            "{kind:?}: {:.1} m, {} vertices, half widths {left:.1} / {right:.1} m",
            track.length(),
            track.centerline().len()
        );
        lengths.push((kind, track.length()));
    }
    let oval = generate_track(&TrackGenConfig::default(), 0)?;
    let copy = Track::from_text(&oval.to_text())?;
    println!("oval fingerprint {} survives the text round trip: {}", oval.fingerprint(), copy.fingerprint() == oval.fingerprint());
    Ok(lengths)
}

fn main() -> sbrl::Result<()> {
    run_example().map(|_| ())
}
