//! Blue-noise samples over a rectangle, checked by brute force.
//!
//!     cargo run --example poisson_sampling -- 1000 800 50 7

use tilefuse::poisson::{sample_poisson, verify_min_distance, SampleDomain, DEFAULT_ATTEMPTS};

fn main() -> tilefuse::Result<()> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    let get = |i: usize, d: f64| args.get(i).copied().unwrap_or(d);
    let (w, h, r, seed) = (get(0, 1000.0), get(1, 800.0), get(2, 50.0), get(3, 7.0) as u64);

    let points = sample_poisson(SampleDomain::new(w, h)?, r, DEFAULT_ATTEMPTS, seed)?;
    let bound = 4.0 * w * h / (std::f64::consts::PI * r * r);
    println!("{} points in {w}x{h} at r = {r} (packing bound {bound:.0})", points.len());
    println!("min distance holds: {}", verify_min_distance(&points));
    for p in points.points.iter().take(5) {
        println!("  ({:.2}, {:.2})", p.x, p.y);
    }
    Ok(())
}
