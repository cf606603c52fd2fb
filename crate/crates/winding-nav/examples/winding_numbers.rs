//! Winding numbers of hand-built path pairs.
//!
//! The winding number of a pair of trajectories accumulates the signed
//! bearing change of the line connecting the two agents; counterclockwise is
//! positive. A sign tells which side the agents passed each other on, the
//! magnitude how far around they went.
//!
//!     cargo run --example winding_numbers

use winding_nav::topology::{winding_number, winding_profile, PlanarPath};
use winding_nav::Vec2;

fn line(from: Vec2, to: Vec2, samples: usize) -> PlanarPath {
    let pts = (0..samples)
        .map(|k| {
            let t = k as f64 / (samples - 1) as f64;
            Vec2::new(
                from.x + (to.x - from.x) * t,
                from.y + (to.y - from.y) * t,
            )
        })
        .collect();
    PlanarPath::new(pts).unwrap()
}

fn orbit(center: Vec2, radius: f64, from_angle: f64, to_angle: f64, samples: usize) -> PlanarPath {
    let pts = (0..samples)
        .map(|k| {
            let t = k as f64 / (samples - 1) as f64;
            let a = from_angle + (to_angle - from_angle) * t;
            Vec2::new(center.x + radius * a.cos(), center.y + radius * a.sin())
        })
        .collect();
    PlanarPath::new(pts).unwrap()
}

fn main() {
    let n = 41;

    // two agents swapping sides of the plane, offset so they pass cleanly
    let swap_i = line(Vec2::new(-2.0, 0.0), Vec2::new(2.0, 0.0), n);
    let swap_j = line(Vec2::new(2.0, 0.2), Vec2::new(-2.0, 0.2), n);

    // half a mutual orbit: each agent circles the common center
    let orbit_i = orbit(Vec2::ZERO, 1.0, 0.0, std::f64::consts::PI, n);
    let orbit_j = orbit(Vec2::ZERO, 1.0, std::f64::consts::PI, 2.0 * std::f64::consts::PI, n);

    // parallel motion: the connecting line never rotates
    let par_i = line(Vec2::new(-2.0, -0.5), Vec2::new(2.0, -0.5), n);
    let par_j = line(Vec2::new(-2.0, 0.5), Vec2::new(2.0, 0.5), n);

    println!("{:<28} {:>12}", "pair", "winding");
    for (name, a, b) in [
        ("head-on swap (offset +y)", &swap_i, &swap_j),
        ("half mutual orbit", &orbit_i, &orbit_j),
        ("parallel, same direction", &par_i, &par_j),
    ] {
        let w = winding_number(a, b).unwrap();
        println!("{name:<28} {w:>12.6}");
    }

    // the profile is the running winding number, sample by sample
    let profile = winding_profile(&swap_i, &swap_j).unwrap();
    println!("\nhead-on swap, cumulative winding every 5 samples:");
    for (k, w) in profile.iter().enumerate().step_by(5) {
        println!("  sample {k:>3}: {w:>9.6}");
    }
    println!("  final:      {:>9.6}", profile.last().unwrap());

    // role symmetry: swapping who watches whom changes nothing
    let w_ij = winding_number(&swap_i, &swap_j).unwrap();
    let w_ji = winding_number(&swap_j, &swap_i).unwrap();
    println!("\nrole symmetry: w(i,j) = {w_ij:.12}, w(j,i) = {w_ji:.12}");
}
