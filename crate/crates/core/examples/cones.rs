//! Entailment cones: half-aperture, exterior angle and the partial-order loss
//! for a video point and texts placed inside and outside its cone.

use hlformer::manifold::LorentzPoint;
use hlformer::objectives::{exterior_angle, half_aperture, pop_loss, CONE_C};

fn main() -> hlformer::Result<()> {
    let video = LorentzPoint::from_spatial(&[1.0, 0.0]);
    let ha = half_aperture(&video, CONE_C);
    println!("video {:?}, half-aperture {ha:.4} rad", video.coords());

    for (label, spatial) in [
        ("further along the axis", [2.5, 0.05]),
        ("slightly off axis", [2.0, 0.6]),
        ("sideways", [1.0, 1.5]),
        ("back toward the origin", [0.2, 0.1]),
    ] {
        let text = LorentzPoint::from_spatial(&spatial);
        println!(
            "  text {label:<24} angle {:.4}  loss {:.4}",
            exterior_angle(&video, &text)?,
            pop_loss(&video, &text, CONE_C)?
        );
    }
    Ok(())
}
