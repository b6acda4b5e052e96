//! The smooth radial cutoff `j` and the bracket `<r>`.
//!
//! `j(r) = s(2r - 1)` where `s(t) = f(t) / (f(t) + f(1 - t))` and
//! `f(t) = exp(-1/t)` for `t > 0`, zero otherwise. `j` vanishes on `r <= 1/2`,
//! equals one on `r >= 1` and is symmetric about `r = 3/4`.

fn f(t: f64) -> [f64; 3] {
    if t <= 0.0 {
        return [0.0; 3];
    }
    let v = (-1.0 / t).exp();
    let t2 = t * t;
    [v, v / t2, v * (1.0 / (t2 * t2) - 2.0 / (t2 * t))]
}

/// Value and first two derivatives of the mollified step on `[0, 1]`.
pub fn smooth_step(t: f64) -> [f64; 3] {
    if t <= 0.0 {
        return [0.0; 3];
    }
    if t >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let [a, a1, a2] = f(t);
    let [b, b1m, b2m] = f(1.0 - t);
    let (b1, b2) = (-b1m, b2m);
    let s = a + b;
    let s1 = a1 + b1;
    let s2 = a2 + b2;
    let sig = a / s;
    let num1 = a1 * s - a * s1;
    let sig1 = num1 / (s * s);
    let sig2 = (a2 * s - a * s2) / (s * s) - 2.0 * s1 * num1 / (s * s * s);
    [sig, sig1, sig2]
}

/// `j(r)`.
pub fn cutoff_j(r: f64) -> f64 {
    smooth_step(2.0 * r - 1.0)[0]
}

/// `j'(r)`.
pub fn cutoff_j_prime(r: f64) -> f64 {
    2.0 * smooth_step(2.0 * r - 1.0)[1]
}

/// `j''(r)`.
pub fn cutoff_j_second(r: f64) -> f64 {
    4.0 * smooth_step(2.0 * r - 1.0)[2]
}

/// `j((r - start) / width)`: a step rising over `[start + width/2, start + width]`.
pub fn ramp(r: f64, start: f64, width: f64) -> f64 {
    cutoff_j((r - start) / width)
}

/// `<r> = 1 + r j(r)` on the end, `1` on the cap.
pub fn bracket(r: f64) -> f64 {
    if r <= 0.0 {
        1.0
    } else {
        1.0 + r * cutoff_j(r)
    }
}
