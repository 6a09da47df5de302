//! Quantumness certification: CHSH from coincidence counts, the Horodecki
//! CHSH bound of a density matrix, and single-bit min-entropy.

use crate::error::{Error, Result};
use crate::extract::BitStream;
use crate::qmath::{correlation_matrix, ket, Mat2, Projector, TwoQubitState};
use serde::{Deserialize, Serialize};

/// Classical (local hidden variable) CHSH limit.
pub const CLASSICAL_LIMIT: f64 = 2.0;
/// Tsirelson bound `2√2`.
pub const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;
/// Tag written into every report that uses [`chsh_from_rho`].
pub const HORODECKI_CONVENTION: &str = "horodecki-singular-value convention";

/// Analyzer angles in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl Default for ChshSettings {
    fn default() -> Self {
        ChshSettings {
            a: 0.0,
            a_prime: 45.0,
            b: 22.5,
            b_prime: 67.5,
        }
    }
}

impl ChshSettings {
    /// Angles maximizing `|S|` for the dephased singlet with coherence `v`
    /// (correlation matrix `diag(−v, −v, −1)`): `a = 0°, a′ = 45°,
    /// b = ½·atan(v), b′ = 90° − b`. Reduces to the default for `v = 1`.
    pub fn optimal_for_coherence(v: f64) -> Self {
        let b = 0.5 * v.atan().to_degrees();
        ChshSettings {
            a: 0.0,
            a_prime: 45.0,
            b,
            b_prime: 90.0 - b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("a", self.a), ("a'", self.a_prime), ("b", self.b), ("b'", self.b_prime)] {
            if !(0.0..180.0).contains(&x) {
                return Err(Error::validation(format!("analyzer angle {name} = {x}° outside [0°, 180°)")));
            }
        }
        Ok(())
    }

    /// The four `(α, β)` pairs in the order `(a,b), (a,b′), (a′,b), (a′,b′)`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }
}

/// Coincidence counts for one analyzer pair `(α, β)`; `perp` means the
/// orthogonal analyzer output (`α + 90°`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceQuad {
    pub n_ab: u64,
    pub n_ab_perp: u64,
    pub n_aperp_b: u64,
    pub n_aperp_bperp: u64,
}

impl CoincidenceQuad {
    pub fn total(&self) -> u64 {
        self.n_ab + self.n_ab_perp + self.n_aperp_b + self.n_aperp_bperp
    }

    /// The four projectors matching the fields, in field order.
    pub fn projectors(alpha: f64, beta: f64) -> [Projector; 4] {
        let a = ket::linear(alpha);
        let ap = ket::linear(alpha + 90.0);
        let b = ket::linear(beta);
        let bp = ket::linear(beta + 90.0);
        [
            Projector::product("ab", &a, &b),
            Projector::product("ab_perp", &a, &bp),
            Projector::product("aperp_b", &ap, &b),
            Projector::product("aperp_bperp", &ap, &bp),
        ]
    }
}

/// Counts for the four setting pairs, ordered as [`ChshSettings::pairs`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChshCounts {
    pub pairs: [CoincidenceQuad; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    #[serde(rename = "S")]
    pub s: f64,
    pub stderr: f64,
    /// `E(a,b), E(a,b′), E(a′,b), E(a′,b′)`
    pub e: [f64; 4],
    pub e_stderr: [f64; 4],
    /// Total coincidences used.
    pub n: u64,
}

impl ChshResult {
    /// Strict `|S| > 2`.
    pub fn violates_classical_bound(&self) -> bool {
        self.s.abs() > CLASSICAL_LIMIT
    }

    /// `|S| − 2 > sigmas · stderr`.
    pub fn significant_violation(&self, sigmas: f64) -> bool {
        self.s.abs() - CLASSICAL_LIMIT > sigmas * self.stderr
    }
}

/// Standard errors by which `|S|` must exceed the classical limit before a
/// report calls the state entangled.
pub const VIOLATION_SIGMAS: f64 = 3.0;

/// `E = (N(α,β) + N(α⊥,β⊥) − N(α,β⊥) − N(α⊥,β)) / total`
#[allow(non_snake_case)]
pub fn correlation_E(quad: &CoincidenceQuad) -> Result<f64> {
    let total = quad.total();
    if total == 0 {
        return Err(Error::validation("correlation needs a non-zero coincidence total"));
    }
    let same = (quad.n_ab + quad.n_aperp_bperp) as f64;
    let diff = (quad.n_ab_perp + quad.n_aperp_b) as f64;
    Ok((same - diff) / total as f64)
}

/// `S = E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)` with Poisson error
/// propagation (`Var E = (1 − E²)/N` per pair).
pub fn chsh_direct(counts: &ChshCounts) -> Result<ChshResult> {
    let mut e = [0.0; 4];
    let mut e_stderr = [0.0; 4];
    for (k, q) in counts.pairs.iter().enumerate() {
        e[k] = correlation_E(q).map_err(|_| Error::validation(format!("setting pair {k} has zero coincidences")))?;
        e_stderr[k] = ((1.0 - e[k] * e[k]).max(0.0) / q.total() as f64).sqrt();
    }
    let s = e[0] - e[1] + e[2] + e[3];
    let stderr = e_stderr.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(ChshResult {
        s,
        stderr,
        e,
        e_stderr,
        n: counts.pairs.iter().map(|q| q.total()).sum(),
    })
}

fn analyzer(deg: f64) -> Mat2 {
    let p = ket::linear(deg);
    let q = ket::linear(deg + 90.0);
    Mat2::outer(&p, &p) - Mat2::outer(&q, &q)
}

/// `E = Tr(ρ · A(α) ⊗ B(β))` with `A(α) = P_α − P_{α+90°}`.
#[allow(non_snake_case)]
pub fn predicted_E(rho: &TwoQubitState, alpha: f64, beta: f64) -> Result<f64> {
    let op = analyzer(alpha).kron(&analyzer(beta));
    Ok(rho.matrix().trace_product(&op).re)
}

/// `S` predicted by [`predicted_E`] for the given settings.
pub fn predicted_chsh(rho: &TwoQubitState, settings: &ChshSettings) -> Result<f64> {
    let e: Vec<f64> = settings
        .pairs()
        .iter()
        .map(|&(a, b)| predicted_E(rho, a, b))
        .collect::<Result<_>>()?;
    Ok(e[0] - e[1] + e[2] + e[3])
}

/// Maximal CHSH value `2·√(s₁² + s₂²)` from the two largest singular values of
/// the correlation matrix.
pub fn chsh_from_rho(rho: &TwoQubitState) -> Result<f64> {
    let s = correlation_matrix(rho)?.singular_values();
    Ok(2.0 * (s[0] * s[0] + s[1] * s[1]).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinEntropyResult {
    /// Min-entropy in bits per bit.
    pub h_inf: f64,
    pub p_max: f64,
    pub n_bits: usize,
}

/// `H∞ = −log₂ p_max` with `p_max = max(#0, #1)/n`.
pub fn min_entropy(bits: &BitStream) -> Result<MinEntropyResult> {
    let n = bits.len();
    if n == 0 {
        return Err(Error::validation("min-entropy of an empty stream"));
    }
    let ones = bits.count_ones();
    let p_max = ones.max(n - ones) as f64 / n as f64;
    Ok(MinEntropyResult {
        h_inf: -p_max.log2(),
        p_max,
        n_bits: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{random_state, random_unitary2, Mat4, C64};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quad(a: u64, b: u64, c: u64, d: u64) -> CoincidenceQuad {
        // (N(α,β), N(α⊥,β⊥), N(α,β⊥), N(α⊥,β))
        CoincidenceQuad {
            n_ab: a,
            n_aperp_bperp: b,
            n_ab_perp: c,
            n_aperp_b: d,
        }
    }

    #[test]
    fn correlation_values() {
        assert_eq!(correlation_E(&quad(100, 100, 0, 0)).unwrap(), 1.0);
        assert_eq!(correlation_E(&quad(0, 0, 100, 100)).unwrap(), -1.0);
        assert_eq!(correlation_E(&quad(50, 50, 50, 50)).unwrap(), 0.0);
        assert!(correlation_E(&quad(0, 0, 0, 0)).is_err());
    }

    /// Closed form for the singlet: E(α,β) = −cos 2(α−β).
    fn singlet_e(a: f64, b: f64) -> f64 {
        -(2.0 * (a - b)).to_radians().cos()
    }

    #[test]
    fn analytic_singlet_counts_reach_tsirelson() {
        let st = ChshSettings::default();
        let n = 1_000_000.0;
        let mut counts = ChshCounts::default();
        for (k, &(a, b)) in st.pairs().iter().enumerate() {
            let e = singlet_e(a, b);
            let same = (n * (1.0 + e) / 4.0).round() as u64;
            let diff = (n * (1.0 - e) / 4.0).round() as u64;
            counts.pairs[k] = quad(same, same, diff, diff);
        }
        let r = chsh_direct(&counts).unwrap();
        assert!((r.s.abs() - TSIRELSON).abs() < 1e-5, "{}", r.s);
        assert!(r.violates_classical_bound());
    }

    #[test]
    fn uncorrelated_counts_give_zero() {
        let counts = ChshCounts {
            pairs: [quad(25, 25, 25, 25); 4],
        };
        assert_eq!(chsh_direct(&counts).unwrap().s, 0.0);
        let mut bad = counts;
        bad.pairs[2] = CoincidenceQuad::default();
        assert!(chsh_direct(&bad).is_err());
    }

    #[test]
    fn predicted_correlations_of_singlet() {
        let s = TwoQubitState::singlet();
        assert!((predicted_E(&s, 10.0, 10.0).unwrap() + 1.0).abs() < 1e-12);
        assert!(predicted_E(&s, 0.0, 45.0).unwrap().abs() < 1e-12);
        assert!((predicted_E(&s, 22.5, 0.0).unwrap() + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        for (a, b) in [(0.0, 22.5), (13.0, 71.0), (45.0, 67.5)] {
            assert!((predicted_E(&s, a, b).unwrap() - singlet_e(a, b)).abs() < 1e-12);
        }
    }

    #[test]
    fn horodecki_values() {
        assert!((chsh_from_rho(&TwoQubitState::singlet()).unwrap() - TSIRELSON).abs() < 1e-9);
        assert!(chsh_from_rho(&TwoQubitState::maximally_mixed()).unwrap().abs() < 1e-12);
        // Werner: C = −p·I₃, so S = 2√2·p.
        assert!((chsh_from_rho(&TwoQubitState::werner(0.8)).unwrap() - TSIRELSON * 0.8).abs() < 1e-9);
    }

    #[test]
    fn horodecki_dephased_family() {
        for v in [0.0, 0.3, 0.758, 0.9655, 1.0] {
            let mut m = Mat4::zeros();
            m.0[1][1] = C64::new(0.5, 0.0);
            m.0[2][2] = C64::new(0.5, 0.0);
            m.0[1][2] = C64::new(-v / 2.0, 0.0);
            m.0[2][1] = C64::new(-v / 2.0, 0.0);
            let rho = TwoQubitState::new(m).unwrap();
            let expect = 2.0 * (1.0 + v * v).sqrt();
            assert!((chsh_from_rho(&rho).unwrap() - expect).abs() < 1e-9);
            let opt = predicted_chsh(&rho, &ChshSettings::optimal_for_coherence(v)).unwrap();
            assert!((opt.abs() - expect).abs() < 1e-9, "v={v}: {opt}");
        }
    }

    #[test]
    fn tsirelson_over_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let rho = random_state(&mut rng);
            assert!(chsh_from_rho(&rho).unwrap() <= TSIRELSON + 1e-9);
        }
    }

    #[test]
    fn min_entropy_cases() {
        let bal = BitStream::from_str01("01010101");
        assert_eq!(min_entropy(&bal).unwrap().h_inf, 1.0);
        assert_eq!(min_entropy(&BitStream::zeros(100)).unwrap().h_inf, 0.0);
        assert!(min_entropy(&BitStream::new()).is_err());
        // p_max = 2^-0.999735
        let p_max = 2f64.powf(-0.999735);
        let h = -p_max.log2();
        assert!((h - 0.999735).abs() < 1e-12);
        assert!((p_max - 0.500092).abs() < 1e-6);
        let n = 1_000_000usize;
        let ones = (p_max * n as f64).round() as usize;
        let s: BitStream = (0..n).map(|i| i < ones).collect();
        let r = min_entropy(&s).unwrap();
        assert_eq!(r.h_inf, -r.p_max.log2());
        assert!((r.h_inf - 0.999735).abs() < 2e-6);
    }

    proptest! {
        #[test]
        fn local_unitaries_preserve_horodecki_bound(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_state(&mut rng);
            let u = random_unitary2(&mut rng).kron(&random_unitary2(&mut rng));
            let a = chsh_from_rho(&rho).unwrap();
            let b = chsh_from_rho(&rho.conjugate(&u)).unwrap();
            prop_assert!((a - b).abs() <= 1e-9);
        }

        #[test]
        fn product_states_never_violate(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = crate::qmath::random_state(&mut rng);
            let b = crate::qmath::random_state(&mut rng);
            // Partial traces give single-qubit mixed states; take their product.
            let ra = partial_trace_b(&a);
            let rb = partial_trace_a(&b);
            let prod = TwoQubitState::new(ra.kron(&rb)).unwrap();
            prop_assert!(chsh_from_rho(&prod).unwrap() <= 2.0 + 1e-9);
        }

        #[test]
        fn min_entropy_permutation_invariant(bits in proptest::collection::vec(any::<bool>(), 1..500), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut shuffled = bits.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = min_entropy(&bits.into_iter().collect()).unwrap();
            let b = min_entropy(&shuffled.into_iter().collect()).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    fn partial_trace_b(rho: &TwoQubitState) -> Mat2 {
        let m = rho.matrix();
        Mat2::from_fn(|i, j| m.0[2 * i][2 * j] + m.0[2 * i + 1][2 * j + 1])
    }

    fn partial_trace_a(rho: &TwoQubitState) -> Mat2 {
        let m = rho.matrix();
        Mat2::from_fn(|i, j| m.0[i][j] + m.0[2 + i][2 + j])
    }
}
