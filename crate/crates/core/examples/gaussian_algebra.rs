//! Conditioning a joint Gaussian, multiplying densities and box probabilities.

use eventpf::gaussian::{box_probability, mixture_from_box_default, product};
use eventpf::{BoxSet, Gaussian, JointGaussian};
use nalgebra::{dmatrix, dvector};

fn main() -> eventpf::Result<()> {
    // x ~ N(1, 2), y = x + v with v ~ N(0, 0.5).
    let joint = JointGaussian::new(dvector![1.0], dvector![1.0], dmatrix![2.0], dmatrix![2.0], dmatrix![2.5])?;
    let post = joint.condition(&dvector![2.0])?;
    println!("p(x | y=2): mean {:.4}, var {:.4}", post.mean()[0], post.cov()[(0, 0)]);

    let a = Gaussian::scalar(0.0, 1.0)?;
    let b = Gaussian::scalar(2.0, 3.0)?;
    let (log_scale, c) = product(&a, &b)?;
    println!("N(0,1)·N(2,3) = {:.4} · N({:.4}, {:.4})", log_scale.exp(), c.mean()[0], c.cov()[(0, 0)]);

    let h = BoxSet::interval(-1.96, 1.96)?;
    println!("P(N(0,1) ∈ [-1.96, 1.96]) = {:.6}", box_probability(&a, &h)?);

    let mix = mixture_from_box_default(&BoxSet::interval(-1.0, 1.0)?, 3)?;
    for (w, g) in mix.weights().iter().zip(mix.components()) {
        println!("uniform[-1,1] component: weight {w:.3}, mean {:+.3}, var {:.3}", g.mean()[0], g.cov()[(0, 0)]);
    }
    Ok(())
}
