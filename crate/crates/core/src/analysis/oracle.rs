use crate::vec3::Vec3;

/// Closed form for the follower of a two-bird flock in the relative frame:
/// `v_2[t] = ∏_{τ=1}^{t} (1 - h a_21[τ]) v_2[0]`.
///
/// `a21[τ - 1]` is the weight applied at step `τ`; returns `v_2[0..=n]`.
pub fn two_bird_product_oracle(a21: &[f64], h: f64, v2_initial: Vec3) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(a21.len() + 1);
    out.push(v2_initial);
    let mut product = 1.0;
    for &a in a21 {
        product *= 1.0 - h * a;
        out.push(product * v2_initial);
    }
    out
}
