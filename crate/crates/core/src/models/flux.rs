//! Mean-field jump fluxes coupled to a control: state `(mu, w)` with `mu` a
//! distribution over species and `w` the accumulated flux along each bond,
//! `Lambda = sum_bonds v(bond, mu, theta) [exp(p_b - p_a + p_bond) - 1]`.

use crate::containment::{Containment, ContainmentKind};
use crate::cost::{ControlCost, JumpDvCost};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianModel, InternalHamiltonian};
use crate::jump::{JumpRateField, RateFamily};
use crate::report::{ReportEntry, Status};
use crate::vecops::project_simplex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxSpec {
    pub species: usize,
    /// Ordered pairs `(a, b)`, `a != b`, zero-based.
    pub bonds: Vec<(usize, usize)>,
    /// Upper end of the verification box in the flux coordinates.
    #[serde(default = "default_flux_box")]
    pub flux_box: f64,
}

fn default_flux_box() -> f64 {
    5.0
}

impl FluxSpec {
    pub fn dim(&self) -> usize {
        self.species + self.bonds.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.species < 2 || self.bonds.is_empty() {
            return Err(Error::InvalidModel("flux model needs two species and one bond".into()));
        }
        for &(a, b) in &self.bonds {
            if a == b || a >= self.species || b >= self.species {
                return Err(Error::InvalidModel(format!("invalid bond ({a}, {b})")));
            }
        }
        Ok(())
    }
}

/// Flux rate `v(bond, mu, theta) >= 0`.
pub trait FluxKernel: Send + Sync {
    fn controls(&self) -> usize;

    fn rate(&self, spec: &FluxSpec, bond: usize, mu: &[f64], theta: &[f64]) -> f64;

    fn grad_theta(&self, spec: &FluxSpec, bond: usize, mu: &[f64], theta: &[f64]) -> Vec<f64> {
        let h = 1e-7;
        let mut t = theta.to_vec();
        (0..theta.len())
            .map(|z| {
                t[z] = theta[z] + h;
                let up = self.rate(spec, bond, mu, &t);
                t[z] = theta[z] - h;
                let down = self.rate(spec, bond, mu, &t);
                t[z] = theta[z];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn affine_in_control(&self) -> bool {
        false
    }

    /// The source factor `v_dagger(bond, mu_a)` when the kernel factorizes explicitly.
    fn source_factor(&self, _spec: &FluxSpec, _bond: usize, _mu_source: f64) -> Option<f64> {
        None
    }

    /// Upper bound on `v` over the whole domain and all controls.
    fn rate_bound(&self, spec: &FluxSpec, bond: usize) -> f64;
}

/// `v = mu_a * (sum_z rates[bond][z] theta_z) * exp(coupling * (mu_b - mu_a))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureKernel {
    pub rates: Vec<Vec<f64>>,
    #[serde(default)]
    pub coupling: f64,
}

impl MixtureKernel {
    pub fn new(rates: Vec<Vec<f64>>, coupling: f64) -> Result<Self> {
        let j = rates.first().map_or(0, |r| r.len());
        if j == 0 || rates.iter().any(|r| r.len() != j) {
            return Err(Error::InvalidModel("mixture rates must be a non-empty bonds x controls table".into()));
        }
        if rates.iter().flatten().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidModel("mixture rates must be positive and finite".into()));
        }
        Ok(Self { rates, coupling })
    }

    /// `max_z r / min_z r` over bonds: the bounded-ratio constant.
    pub fn ratio_bound(&self) -> f64 {
        self.rates
            .iter()
            .map(|r| {
                let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
                hi / lo
            })
            .fold(1.0, f64::max)
    }

    fn tilt(&self, spec: &FluxSpec, bond: usize, mu: &[f64]) -> f64 {
        let (a, b) = spec.bonds[bond];
        (self.coupling * (mu[b] - mu[a])).exp()
    }
}

impl FluxKernel for MixtureKernel {
    fn controls(&self) -> usize {
        self.rates[0].len()
    }

    fn rate(&self, spec: &FluxSpec, bond: usize, mu: &[f64], theta: &[f64]) -> f64 {
        let (a, _) = spec.bonds[bond];
        let mix: f64 = self.rates[bond].iter().zip(theta).map(|(r, t)| r * t).sum();
        mu[a].max(0.0) * mix * self.tilt(spec, bond, mu)
    }

    fn grad_theta(&self, spec: &FluxSpec, bond: usize, mu: &[f64], _theta: &[f64]) -> Vec<f64> {
        let (a, _) = spec.bonds[bond];
        let s = mu[a].max(0.0) * self.tilt(spec, bond, mu);
        self.rates[bond].iter().map(|r| r * s).collect()
    }

    fn affine_in_control(&self) -> bool {
        true
    }

    fn source_factor(&self, _spec: &FluxSpec, _bond: usize, mu_source: f64) -> Option<f64> {
        Some(mu_source.max(0.0))
    }

    fn rate_bound(&self, _spec: &FluxSpec, bond: usize) -> f64 {
        let hi = self.rates[bond].iter().copied().fold(0.0, f64::max);
        hi * self.coupling.abs().exp()
    }
}

pub struct FluxLambda {
    pub spec: FluxSpec,
    pub kernel: Arc<dyn FluxKernel>,
}

impl FluxLambda {
    fn exponent(&self, bond: usize, p: &[f64]) -> f64 {
        let (a, b) = self.spec.bonds[bond];
        p[b] - p[a] + p[self.spec.species + bond]
    }
}

impl InternalHamiltonian for FluxLambda {
    fn state_dim(&self) -> usize {
        self.spec.dim()
    }

    fn control_dim(&self) -> usize {
        self.kernel.controls()
    }

    fn eval(&self, x: &[f64], p: &[f64], theta: &[f64]) -> f64 {
        let mu = &x[..self.spec.species];
        (0..self.spec.bonds.len())
            .map(|k| self.kernel.rate(&self.spec, k, mu, theta) * self.exponent(k, p).exp_m1())
            .sum()
    }

    fn grad_control(&self, x: &[f64], p: &[f64], theta: &[f64]) -> Vec<f64> {
        let mu = &x[..self.spec.species];
        let mut g = vec![0.0; theta.len()];
        for k in 0..self.spec.bonds.len() {
            let f = self.exponent(k, p).exp_m1();
            for (gz, dz) in g.iter_mut().zip(self.kernel.grad_theta(&self.spec, k, mu, theta)) {
                *gz += dz * f;
            }
        }
        g
    }

    fn grad_momentum(&self, x: &[f64], p: &[f64], theta: &[f64]) -> Vec<f64> {
        let q = self.spec.species;
        let mu = &x[..q];
        let mut g = vec![0.0; self.spec.dim()];
        for (k, &(a, b)) in self.spec.bonds.iter().enumerate() {
            let c = self.kernel.rate(&self.spec, k, mu, theta) * self.exponent(k, p).exp();
            g[b] += c;
            g[a] -= c;
            g[q + k] += c;
        }
        g
    }

    fn affine_in_control(&self) -> bool {
        self.kernel.affine_in_control()
    }
}

fn random_point(rng: &mut ChaCha8Rng, q: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..q).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Sample distributions: vertices, edge midpoints, points with one species
/// emptied, and random interior points.
fn mu_samples(q: usize, rng: &mut ChaCha8Rng, random: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for a in 0..q {
        let mut v = vec![0.0; q];
        v[a] = 1.0;
        out.push(v);
        for b in a + 1..q {
            let mut m = vec![0.0; q];
            m[a] = 0.5;
            m[b] = 0.5;
            out.push(m);
        }
    }
    for k in 0..random {
        let mut m = random_point(rng, q);
        if k % 3 == 0 {
            m[k % q] = 0.0;
            m = project_simplex(&m);
        }
        out.push(m);
    }
    out
}

/// Samples the proper-kernel axioms and the bounded-ratio condition.
///
/// Returns entries `kernel-vanishing`, `kernel-monotone`, `kernel-positive`
/// and `kernel-ratio`.
pub fn check_proper_kernel(spec: &FluxSpec, kernel: &dyn FluxKernel, samples: usize, seed: u64) -> Vec<ReportEntry> {
    let q = spec.species;
    let j = kernel.controls();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mus = mu_samples(q, &mut rng, samples);
    let mut thetas: Vec<Vec<f64>> = (0..j).map(|z| (0..j).map(|i| if i == z { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..8 {
        thetas.push(random_point(&mut rng, j));
    }

    let mut vanish_worst: f64 = 0.0;
    let mut vanish_witness = None;
    let mut pos_worst = f64::INFINITY;
    let mut pos_witness = None;
    let mut ratio: f64 = 1.0;
    for (k, &(a, _)) in spec.bonds.iter().enumerate() {
        for mu in &mus {
            let vals: Vec<f64> = thetas.iter().map(|t| kernel.rate(spec, k, mu, t)).collect();
            if mu[a] <= 0.0 {
                for (v, t) in vals.iter().zip(&thetas) {
                    if v.abs() > vanish_worst {
                        vanish_worst = v.abs();
                        vanish_witness = Some([mu.clone(), t.clone()].concat());
                    }
                }
            } else {
                for (v, t) in vals.iter().zip(&thetas) {
                    if *v < pos_worst {
                        pos_worst = *v;
                        pos_witness = Some([mu.clone(), t.clone()].concat());
                    }
                }
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                ratio = ratio.max(if lo > 0.0 { hi / lo } else { f64::INFINITY });
            }
        }
    }

    let mut vanishing = ReportEntry::new("kernel-vanishing", Status::from_bool(vanish_worst <= 1e-14))
        .residual(vanish_worst)
        .note("v = 0 whenever the source species is empty");
    if let Some(w) = vanish_witness.filter(|_| vanish_worst > 1e-14) {
        vanishing = vanishing.witness(w);
    }
    let mut positive = ReportEntry::new("kernel-positive", Status::from_bool(pos_worst > 0.0))
        .constant("min_rate", pos_worst)
        .note("v > 0 whenever the source species is occupied");
    if let Some(w) = pos_witness.filter(|_| !(pos_worst > 0.0)) {
        positive = positive.witness(w);
    }

    // Monotonicity of the source factor along a fine grid of source masses.
    let mut mono_worst: f64 = 0.0;
    let mut explicit = true;
    for (k, &(a, b)) in spec.bonds.iter().enumerate() {
        let mut prev = 0.0;
        for s in 0..=200 {
            let m = s as f64 / 200.0;
            let val = match kernel.source_factor(spec, k, m) {
                Some(v) => v,
                None => {
                    explicit = false;
                    let mut mu = vec![0.0; q];
                    mu[a] = m;
                    mu[b] = 1.0 - m;
                    kernel.rate(spec, k, &mu, &thetas[0])
                }
            };
            mono_worst = mono_worst.max(prev - val);
            prev = val;
        }
    }
    let monotone = ReportEntry::new("kernel-monotone", Status::from_bool(mono_worst <= 1e-14))
        .residual(mono_worst)
        .note(if explicit {
            "explicit source factor"
        } else {
            "source factor probed along the a-b edge of the simplex"
        });

    let ratio_entry = ReportEntry::new("kernel-ratio", Status::from_bool(ratio.is_finite()))
        .constant("C", ratio)
        .note("sup over sampled mu of v(theta1) / v(theta2)");
    vec![vanishing, monotone, positive, ratio_entry]
}

/// Builds the flux model on the simplex-times-orthant domain with the
/// containment function `sum_bonds log(1 + w_bond)`.
pub fn make_flux_model(
    spec: &FluxSpec,
    kernel: Arc<dyn FluxKernel>,
    cost: Arc<dyn ControlCost>,
    seed: u64,
) -> Result<HamiltonianModel> {
    spec.validate()?;
    if kernel.controls() != cost.control_dim() {
        return Err(Error::Dimension(format!(
            "kernel mixes {} controls but the cost acts on {}",
            kernel.controls(),
            cost.control_dim()
        )));
    }
    for e in check_proper_kernel(spec, kernel.as_ref(), 64, seed) {
        if e.status != Status::Pass {
            return Err(Error::KernelAxiom {
                axiom: e.name,
                detail: format!("residual {:.3e}, witness {:?}", e.worst_residual, e.witness),
            });
        }
    }
    let bound = (1f64.exp() - 1.0)
        * (0..spec.bonds.len()).map(|k| kernel.rate_bound(spec, k)).sum::<f64>();
    let q = spec.species;
    let nb = spec.bonds.len();
    let lower = vec![0.0; q + nb];
    let upper: Vec<f64> = (0..q + nb).map(|i| if i < q { 1.0 } else { spec.flux_box }).collect();
    HamiltonianModel::new(
        "flux-meanfield",
        Arc::new(FluxLambda {
            spec: spec.clone(),
            kernel,
        }),
        cost,
        Domain::SimplexOrthant {
            simplex_dim: q,
            orthant_dim: nb,
        },
        Containment::new(ContainmentKind::LogOrthant { offset: q }, bound),
        (lower, upper),
    )
}

/// Three species on a ring, two mixed control states and a jump occupation
/// cost whose rates oscillate with the densities.
pub fn default_flux_model(seed: u64) -> Result<HamiltonianModel> {
    let spec = FluxSpec {
        species: 3,
        bonds: vec![(0, 1), (1, 2), (2, 0)],
        flux_box: 5.0,
    };
    let kernel = MixtureKernel::new(vec![vec![1.0, 2.0], vec![0.5, 1.5], vec![1.2, 0.8]], 0.5)?;
    let rates = JumpRateField::new(RateFamily::Sinusoidal {
        base: vec![vec![0.0, 1.0], vec![2.0, 0.0]],
        amplitude: vec![vec![0.0, 0.3], vec![0.3, 0.0]],
        wavevector: vec![1.0, -1.0, 0.5, 0.0, 0.0, 0.0],
        phase: 0.0,
    })?;
    make_flux_model(&spec, Arc::new(kernel), Arc::new(JumpDvCost::new(rates)), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::ZeroCost;

    fn two_species() -> FluxSpec {
        FluxSpec {
            species: 2,
            bonds: vec![(0, 1)],
            flux_box: 5.0,
        }
    }

    struct Leaky;

    impl FluxKernel for Leaky {
        fn controls(&self) -> usize {
            1
        }
        fn rate(&self, _s: &FluxSpec, _k: usize, mu: &[f64], _t: &[f64]) -> f64 {
            0.1 + mu[0]
        }
        fn rate_bound(&self, _s: &FluxSpec, _k: usize) -> f64 {
            1.1
        }
    }

    #[test]
    fn gradient_at_a_vertex_is_parallel_to_the_edge() {
        let k = MixtureKernel::new(vec![vec![1.0]], 0.0).unwrap();
        let m = make_flux_model(&two_species(), Arc::new(k), Arc::new(ZeroCost { controls: 1 }), 1).unwrap();
        let g = m.lambda.grad_momentum(&[1.0, 0.0, 0.0], &[0.3, -0.4, 0.2], &[1.0]);
        assert!((g[0] + g[1]).abs() < 1e-15 && g[1] > 0.0);
        assert!(g[2] > 0.0);
    }

    #[test]
    fn constant_kernel_has_unit_ratio() {
        let k = MixtureKernel::new(vec![vec![2.0, 2.0]], 0.0).unwrap();
        let r = check_proper_kernel(&two_species(), &k, 32, 3);
        assert!(r.iter().all(|e| e.status == Status::Pass));
        assert!((r[3].constants["C"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_ratio_is_bounded_by_extreme_rates() {
        let k = MixtureKernel::new(vec![vec![0.5, 2.0, 1.0]], 0.7).unwrap();
        let r = check_proper_kernel(&two_species(), &k, 64, 5);
        let c = r[3].constants["C"];
        assert!(c <= k.ratio_bound() + 1e-12 && c >= 3.9, "C = {c}");
    }

    #[test]
    fn leaky_kernel_is_rejected_by_name() {
        let err = make_flux_model(&two_species(), Arc::new(Leaky), Arc::new(ZeroCost { controls: 1 }), 1).unwrap_err();
        match err {
            Error::KernelAxiom { axiom, .. } => assert_eq!(axiom, "kernel-vanishing"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn zero_momentum_gives_zero() {
        let k = MixtureKernel::new(vec![vec![1.0, 3.0], vec![2.0, 0.5]], 0.4).unwrap();
        let spec = FluxSpec {
            species: 2,
            bonds: vec![(0, 1), (1, 0)],
            flux_box: 5.0,
        };
        let lam = FluxLambda {
            spec,
            kernel: Arc::new(k),
        };
        assert_eq!(lam.eval(&[0.3, 0.7, 1.0, 2.0], &[0.0; 4], &[0.4, 0.6]), 0.0);
    }
}
