// Evaluates a probabilistic Bézier curve over a 2 s horizon and scores a
// realized future against it.

use sbrl::bezier::{evaluate, recency_weights, weighted_ll_and_grad, BernsteinTable, BezierParams};
use sbrl::geometry::Vec2;

pub fn run_example() -> sbrl::Result<(f64, f64)> {
    let horizon = 100;
    let params = BezierParams {
        mu: vec![
            Vec2::new(8.0, 0.0),
            Vec2::new(16.0, 0.5),
            Vec2::new(24.0, 1.5),
            Vec2::new(31.0, 3.0),
            Vec2::new(38.0, 5.0),
        ],
        log_std: (0..5).map(|k| [(0.1 + 0.2 * k as f64).ln(); 2]).collect(),
    };
    let pred = evaluate(&params, horizon);
    for i in [0, 24, 49, 74, 99] {
        let (m, v) = (pred.means[i], pred.variances[i]);
        println!("step {:3}: mean ({:6.2}, {:5.2}) m, std ({:.3}, {:.3}) m", i + 1, m.x, m.y, v[0].sqrt(), v[1].sqrt());
    }

    let table = BernsteinTable::new(5, horizon);
    let on_curve: Vec<Vec2> = pred.means.clone();
    let drifted: Vec<Vec2> = pred.means.iter().map(|&m| m + Vec2::new(0.0, 1.0)).collect();
    let flat = recency_weights(horizon, 1.0);
    let (ll_on, _) = weighted_ll_and_grad(&params, &table, &on_curve, &flat);
    let (ll_off, grad) = weighted_ll_and_grad(&params, &table, &drifted, &flat);
    println!("log-likelihood on the mean curve {ll_on:.3}, shifted 1 m left {ll_off:.3}");
    println!("gradient pulls the last control point by ({:.3}, {:.3})", grad.mu[4].x, grad.mu[4].y);
    Ok((ll_on, ll_off))
}

fn main() -> sbrl::Result<()> {
    run_example().map(|_| ())
}
