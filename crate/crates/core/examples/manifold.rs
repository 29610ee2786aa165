//! Exponential and logarithmic maps, distances and the weighted centroid on
//! the unit hyperboloid.

use hlformer::manifold::{
    exp_map, log_map, lorentz_centroid, lorentz_inner, sq_lorentz_distance, LorentzPoint,
    TangentVector,
};

fn main() -> hlformer::Result<()> {
    let o = LorentzPoint::origin(3);
    let x = exp_map(&o, &TangentVector::at_origin(&[0.8, -0.3, 0.1]))?;
    println!("x = {:?}", x.coords());
    println!("<x, x> = {:.12}", lorentz_inner(x.coords(), x.coords())?);
    println!("distance from origin = {:.6}", x.origin_distance());

    let back = log_map(&o, &x)?;
    println!("log_o(x) = {:?}", &back.coords()[1..]);

    let y = LorentzPoint::from_spatial(&[-0.5, 0.9, 0.0]);
    let z = LorentzPoint::from_spatial(&[0.1, 0.1, 1.2]);
    let c = lorentz_centroid(&[x.clone(), y.clone(), z.clone()], &[0.5, 0.3, 0.2])?;
    println!("centroid = {:?}", c.coords());
    for (name, p) in [("x", &x), ("y", &y), ("z", &z)] {
        println!("  squared distance to {name}: {:.6}", sq_lorentz_distance(&c, p)?);
    }
    Ok(())
}
