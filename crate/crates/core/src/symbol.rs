// SPDX-License-Identifier: Apache-2.0

//! Complex frequencies `ζ` with `ζ·ζ = 0`, the symbol
//! `p_ζ(ξ) = -|ξ|² + 2i ζ·ξ` of `Δ_ζ = Δ + 2ζ·∇`, and the geometry of its
//! zero set `Σ_ζ`.
//!
//! Every `ζ` is stored together with its adapted frame `ζ = s(e₁ - i e₂)`,
//! in which `p_ζ(ξ) = (s² - |ξ - s e₂|²) + 2is (ξ·e₁)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;

/// Ratio `M` separating the low-frequency regime `|ξ| ≤ M s`.
pub const LOW_FREQUENCY_RATIO: f64 = 100.0;

const FRAME_TOL: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_unit(v: &[f64], name: &str) -> Result<()> {
    if (norm(v) - 1.0).abs() > FRAME_TOL {
        return Err(Error::Frame(format!("{name} is not a unit vector")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zeta {
    value: Vec<Complex64>,
    s: f64,
    e1: Vec<f64>,
    e2: Vec<f64>,
}

impl Zeta {
    /// `ζ = s(e₁ - i e₂)` for an orthonormal pair `(e₁, e₂)`.
    pub fn from_frame(s: f64, e1: &[f64], e2: &[f64]) -> Result<Self> {
        if e1.len() != e2.len() {
            return Err(Error::Frame("frame vectors differ in dimension".into()));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Frame(format!("magnitude parameter {s} must be positive")));
        }
        check_unit(e1, "e1")?;
        check_unit(e2, "e2")?;
        if dot(e1, e2).abs() > FRAME_TOL {
            return Err(Error::Frame("e1 and e2 are not orthogonal".into()));
        }
        let value = e1
            .iter()
            .zip(e2)
            .map(|(a, b)| Complex64::new(s * a, -s * b))
            .collect();
        Ok(Self {
            value,
            s,
            e1: e1.to_vec(),
            e2: e2.to_vec(),
        })
    }

    /// Builds `ζ` from its complex components, recovering the adapted frame.
    pub fn from_value(value: &[Complex64]) -> Result<Self> {
        let (e1, e2, s) = adapted_frame(value)?;
        Ok(Self {
            value: value.to_vec(),
            s,
            e1,
            e2,
        })
    }

    pub fn value(&self) -> &[Complex64] {
        &self.value
    }

    pub fn dim(&self) -> usize {
        self.value.len()
    }

    /// `s = |Re ζ| = |Im ζ|`.
    pub fn s(&self) -> f64 {
        self.s
    }

    /// `|ζ| = √2 s`.
    pub fn magnitude(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.s
    }

    pub fn e1(&self) -> &[f64] {
        &self.e1
    }

    pub fn e2(&self) -> &[f64] {
        &self.e2
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.value.iter().map(|c| c.re).collect()
    }

    pub fn imag_part(&self) -> Vec<f64> {
        self.value.iter().map(|c| c.im).collect()
    }

    /// Unconjugated `ζ·ζ`.
    pub fn self_dot(&self) -> Complex64 {
        self.value.iter().map(|c| c * c).sum()
    }

    pub fn symbol(&self, xi: &[f64]) -> Complex64 {
        symbol_p(self, xi)
    }

    /// `p_ζ` at every spectral index of `grid`.
    pub fn symbol_table(&self, grid: &FrequencyGrid) -> Vec<Complex64> {
        let re = self.real_part();
        let im = self.imag_part();
        (0..grid.len())
            .map(|idx| {
                let xi = grid.frequency(idx);
                Complex64::new(
                    -grid.frequency_sq(idx) - 2.0 * dot(&im, xi),
                    2.0 * dot(&re, xi),
                )
            })
            .collect()
    }
}

/// `p_ζ(ξ) = -|ξ|² + 2i ζ·ξ`.
pub fn symbol_p(zeta: &Zeta, xi: &[f64]) -> Complex64 {
    let zx: Complex64 = zeta.value.iter().zip(xi).map(|(z, x)| z * x).sum();
    Complex64::new(-dot(xi, xi), 0.0) + Complex64::new(0.0, 2.0) * zx
}

/// The same symbol in the adapted frame: `(s² - |ξ - s e₂|²) + 2is (ξ·e₁)`.
pub fn symbol_p_adapted(zeta: &Zeta, xi: &[f64]) -> Complex64 {
    let s = zeta.s;
    let shifted: f64 = xi
        .iter()
        .zip(&zeta.e2)
        .map(|(x, e)| (x - s * e).powi(2))
        .sum();
    Complex64::new(s * s - shifted, 2.0 * s * dot(xi, &zeta.e1))
}

/// `|s - |ξ - s e₂|| + |ξ·e₁|`, comparable to the distance from `ξ` to `Σ_ζ`.
pub fn char_distance(zeta: &Zeta, xi: &[f64]) -> f64 {
    let s = zeta.s;
    let radial: f64 = xi
        .iter()
        .zip(&zeta.e2)
        .map(|(x, e)| (x - s * e).powi(2))
        .sum::<f64>()
        .sqrt();
    (s - radial).abs() + dot(xi, &zeta.e1).abs()
}

/// Recovers `(e₁, e₂, s)` with `ζ = s(e₁ - i e₂)`.
pub fn adapted_frame(value: &[Complex64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let re: Vec<f64> = value.iter().map(|c| c.re).collect();
    let im: Vec<f64> = value.iter().map(|c| c.im).collect();
    let (nr, ni) = (norm(&re), norm(&im));
    if nr == 0.0 || ni == 0.0 {
        return Err(Error::Frame("zeta must be non-zero".into()));
    }
    let zz: Complex64 = value.iter().map(|c| c * c).sum();
    if zz.norm() > FRAME_TOL * (nr * nr + ni * ni) {
        return Err(Error::Frame(format!("zeta·zeta = {zz} is not zero")));
    }
    let e1 = re.iter().map(|x| x / nr).collect();
    let e2 = im.iter().map(|x| -x / ni).collect();
    Ok((e1, e2, nr))
}

/// The pair `ζ₁ = sη₁ + i(k/2 + rη₂)`, `ζ₂ = -sη₁ + i(k/2 - rη₂)` with
/// `|k|²/4 + r² = s²`, so that `ζ₁ + ζ₂ = ik`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaPair {
    pub zeta1: Zeta,
    pub zeta2: Zeta,
    pub k: Vec<f64>,
    pub s: f64,
    pub r: f64,
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
}

pub fn make_zeta_pair(k: &[f64], s: f64, eta1: &[f64], eta2: &[f64]) -> Result<ZetaPair> {
    let d = k.len();
    if eta1.len() != d || eta2.len() != d {
        return Err(Error::Frame("eta vectors must match the dimension of k".into()));
    }
    let k_norm = norm(k);
    if !(s > 0.0) || k_norm >= 2.0 * s {
        return Err(Error::InfeasibleGeometry(format!(
            "|k| = {k_norm} must be smaller than 2s = {}",
            2.0 * s
        )));
    }
    check_unit(eta1, "eta1")?;
    check_unit(eta2, "eta2")?;
    let tol = FRAME_TOL * (1.0 + k_norm);
    if dot(k, eta1).abs() > tol || dot(k, eta2).abs() > tol || dot(eta1, eta2).abs() > FRAME_TOL {
        return Err(Error::Frame("k, eta1 and eta2 must be mutually orthogonal".into()));
    }
    let r = (s * s - k_norm * k_norm / 4.0).sqrt();

    let build = |sign: f64| -> Result<Zeta> {
        let value: Vec<Complex64> = (0..d)
            .map(|j| Complex64::new(sign * s * eta1[j], k[j] / 2.0 + sign * r * eta2[j]))
            .collect();
        let imag: Vec<f64> = value.iter().map(|c| c.im).collect();
        let ni = norm(&imag);
        let e1: Vec<f64> = eta1.iter().map(|x| sign * x).collect();
        let e2: Vec<f64> = imag.iter().map(|x| -x / ni).collect();
        Ok(Zeta { value, s, e1, e2 })
    };
    let zeta1 = build(1.0)?;
    let zeta2 = build(-1.0)?;
    Ok(ZetaPair {
        zeta1,
        zeta2,
        k: k.to_vec(),
        s,
        r,
        eta1: eta1.to_vec(),
        eta2: eta2.to_vec(),
    })
}

/// Two orthonormal vectors spanning a plane orthogonal to `k`.
pub fn orthogonal_plane(k: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = k.len();
    if d < 3 && norm(k) > 0.0 {
        return Err(Error::InfeasibleGeometry(
            "a two-plane orthogonal to k needs d >= 3".into(),
        ));
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let kn = norm(k);
    if kn > 0.0 {
        basis.push(k.iter().map(|x| x / kn).collect());
    }
    let mut plane = Vec::new();
    for axis in 0..d {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let nv = norm(&v);
        if nv > 1e-6 {
            v.iter_mut().for_each(|x| *x /= nv);
            basis.push(v.clone());
            plane.push(v);
            if plane.len() == 2 {
                break;
            }
        }
    }
    if plane.len() < 2 {
        return Err(Error::InfeasibleGeometry("no plane orthogonal to k".into()));
    }
    let p2 = plane.pop().unwrap();
    let p1 = plane.pop().unwrap();
    Ok((p1, p2))
}

/// `(η₁, η₂)` at angle `θ` in the plane spanned by `(p1, p2)`.
pub fn plane_frame(p1: &[f64], p2: &[f64], angle: f64) -> (Vec<f64>, Vec<f64>) {
    let (c, s) = (angle.cos(), angle.sin());
    let eta1 = p1.iter().zip(p2).map(|(a, b)| c * a + s * b).collect();
    let eta2 = p1.iter().zip(p2).map(|(a, b)| -s * a + c * b).collect();
    (eta1, eta2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn pair_with_zero_k_is_symmetric() {
        let pair = make_zeta_pair(&[0.0; 3], 1.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        let i = Complex64::i();
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        assert_eq!(pair.zeta1.value(), &[one, i, zero]);
        assert_eq!(pair.zeta2.value(), &[-one, -i, zero]);
    }

    #[test]
    fn pair_with_axis_k() {
        // Hand arithmetic: r = √(4 - 1) = √3, ζ₁ = (2, i√3, i), ζ₂ = (-2, -i√3, i);
        // ζ₁·ζ₁ = 4 - 3 - 1 = 0 and ζ₁ + ζ₂ = (0, 0, 2i).
        let pair = make_zeta_pair(&[0.0, 0.0, 2.0], 2.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        let r3 = 3f64.sqrt();
        assert!((pair.r - r3).abs() < 1e-15);
        let z1 = [
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, r3),
            Complex64::new(0.0, 1.0),
        ];
        let z2 = [
            Complex64::new(-2.0, 0.0),
            Complex64::new(0.0, -r3),
            Complex64::new(0.0, 1.0),
        ];
        for j in 0..3 {
            assert!(close(pair.zeta1.value()[j], z1[j], 1e-15));
            assert!(close(pair.zeta2.value()[j], z2[j], 1e-15));
        }
        assert!(pair.zeta1.self_dot().norm() < 1e-12);
        assert!(pair.zeta2.self_dot().norm() < 1e-12);
    }

    #[test]
    fn infeasible_and_bad_frames() {
        let e = [1.0, 0.0, 0.0];
        let f = [0.0, 1.0, 0.0];
        assert!(matches!(
            make_zeta_pair(&[0.0, 0.0, 4.0], 1.0, &e, &f),
            Err(Error::InfeasibleGeometry(_))
        ));
        assert!(matches!(
            make_zeta_pair(&[0.0, 0.0, 1.0], 2.0, &e, &e),
            Err(Error::Frame(_))
        ));
        assert!(matches!(
            make_zeta_pair(&[1.0, 0.0, 0.0], 2.0, &e, &f),
            Err(Error::Frame(_))
        ));
    }

    #[test]
    fn symbol_values() {
        let zeta = Zeta::from_frame(2.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(zeta.symbol(&[0.0; 3]), Complex64::new(0.0, 0.0));
        // −16 + 2i(−8i) = 0
        assert!(zeta.symbol(&[0.0, 4.0, 0.0]).norm() < 1e-12);
        assert!(close(zeta.symbol(&[0.0, 2.0, 0.0]), Complex64::new(4.0, 0.0), 1e-12));
        assert!(close(
            symbol_p_adapted(&zeta, &[0.0, 2.0, 0.0]),
            Complex64::new(4.0, 0.0),
            1e-12
        ));
    }

    #[test]
    fn char_distance_values() {
        let zeta = Zeta::from_frame(2.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!(char_distance(&zeta, &[0.0, 4.0, 0.0]).abs() < 1e-15);
        assert!(char_distance(&zeta, &[0.0; 3]).abs() < 1e-15);
        assert!((char_distance(&zeta, &[0.0, 2.0, 0.0]) - 2.0).abs() < 1e-15);
        let expect = (2.0 - 5f64.sqrt()).abs() + 1.0;
        assert!((char_distance(&zeta, &[1.0, 0.0, 0.0]) - expect).abs() < 1e-15);
    }

    #[test]
    fn adapted_frame_cases() {
        let s0 = 3.0;
        let value = [
            Complex64::new(s0, 0.0),
            Complex64::new(0.0, s0),
            Complex64::new(0.0, 0.0),
        ];
        let (e1, e2, s) = adapted_frame(&value).unwrap();
        assert_eq!(e1, vec![1.0, 0.0, 0.0]);
        assert_eq!(e2, vec![0.0, -1.0, 0.0]);
        assert_eq!(s, s0);

        let pair = make_zeta_pair(&[0.0, 0.0, 2.0], 2.0, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        let (e1, e2, s) = adapted_frame(pair.zeta1.value()).unwrap();
        assert!((s - 2.0).abs() < 1e-15);
        assert_eq!(e1, vec![1.0, 0.0, 0.0]);
        let expect = [0.0, -3f64.sqrt() / 2.0, -0.5];
        for j in 0..3 {
            assert!((e2[j] - expect[j]).abs() < 1e-15);
            assert!((pair.zeta1.e2()[j] - expect[j]).abs() < 1e-15);
        }
        let rebuilt = Zeta::from_frame(s, &e1, &e2).unwrap();
        for j in 0..3 {
            assert!(close(rebuilt.value()[j], pair.zeta1.value()[j], 1e-12));
        }

        assert!(adapted_frame(&[Complex64::new(0.0, 0.0); 3]).is_err());
        let not_null = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(0.0, 0.0),
        ];
        assert!(adapted_frame(&not_null).is_err());
    }

    #[test]
    fn plane_is_orthogonal_to_k() {
        let k = [1.0, 2.0, -1.0];
        let (p1, p2) = orthogonal_plane(&k).unwrap();
        assert!(dot(&p1, &k).abs() < 1e-12 && dot(&p2, &k).abs() < 1e-12);
        assert!(dot(&p1, &p2).abs() < 1e-12);
        let (a, b) = plane_frame(&p1, &p2, 0.7);
        assert!(make_zeta_pair(&k, 5.0, &a, &b).is_ok());
    }
}
