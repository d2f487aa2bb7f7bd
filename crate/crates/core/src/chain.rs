//! Markov chains on states induced by a policy: structure, mixing curves,
//! fitted exponential envelopes, conductance and KL-ball audits.

use nalgebra::{DMatrix, DVector};
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;
use crate::mdp::{Distribution, Mdp, Policy, STOCHASTIC_TOL};

/// Largest state count accepted by the exhaustive conductance computation.
pub const MAX_CONDUCTANCE_STATES: usize = 20;

/// Stand-in for an infinite KL divergence.
pub const KL_INFINITE: f64 = f64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InducedChain {
    num_states: usize,
    /// Row-major transition matrix.
    p: Vec<f64>,
    pub irreducible: bool,
    pub aperiodic: bool,
    /// gcd of the cycle lengths of the support graph (the period when irreducible).
    pub period: usize,
}

impl InducedChain {
    pub fn from_matrix(num_states: usize, p: Vec<f64>) -> Result<Self> {
        if num_states == 0 || p.len() != num_states * num_states {
            return Err(Error::Argument("chain matrix must be square and non-empty".into()));
        }
        for (s, row) in p.chunks(num_states).enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|&x| x < 0.0 || !x.is_finite()) || (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Argument(format!("chain row {s} is not a distribution")));
            }
        }
        let (irreducible, period) = support_structure(num_states, &p);
        Ok(Self { num_states, p, irreducible, aperiodic: period == 1, period })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.p[s * self.num_states..(s + 1) * self.num_states]
    }

    pub fn entry(&self, s: usize, t: usize) -> f64 {
        self.p[s * self.num_states + t]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.p
    }

    /// Unique stationary distribution of an irreducible aperiodic chain.
    pub fn stationary(&self) -> Result<Distribution> {
        if !self.irreducible {
            return Err(Error::Structure("chain is reducible".into()));
        }
        if !self.aperiodic {
            return Err(Error::Structure(format!("chain is periodic with period {}", self.period)));
        }
        let n = self.num_states;
        // (P^T - I) sigma = 0 with the last equation replaced by sum(sigma) = 1
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = self.entry(j, i) - if i == j { 1.0 } else { 0.0 };
            }
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        let sigma = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical("singular stationary system".into()))?;
        let dist = Distribution::from_numeric(sigma.iter().copied().collect())?;
        let residual = stationary_residual(self, &dist);
        if residual > 1e-10 {
            return Err(Error::Numerical(format!("stationary residual {residual:e}")));
        }
        Ok(dist)
    }
}

/// `|| sigma P - sigma ||_1`.
pub fn stationary_residual(chain: &InducedChain, sigma: &Distribution) -> f64 {
    let n = chain.num_states();
    let s = sigma.probs();
    (0..n)
        .map(|j| {
            let flow: f64 = (0..n).map(|i| s[i] * chain.entry(i, j)).sum();
            (flow - s[j]).abs()
        })
        .sum()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn support_structure(n: usize, p: &[f64]) -> (bool, usize) {
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if p[i * n + j] > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = petgraph::algo::tarjan_scc(&graph);
    let irreducible = sccs.len() == 1;

    let mut component = vec![usize::MAX; n];
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            component[v.index()] = c;
        }
    }
    let mut period = 0;
    for members in &sccs {
        let c = component[members[0].index()];
        // BFS levels inside the component; cycle lengths are multiples of the
        // gcd of level[u] + 1 - level[v] over internal edges.
        let mut level = vec![usize::MAX; n];
        let root = members[0].index();
        level[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut g = 0;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if p[u * n + v] <= 0.0 || component[v] != c {
                    continue;
                }
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    g = gcd(g, (level[u] + 1).abs_diff(level[v]));
                }
            }
        }
        period = gcd(period, g);
    }
    (irreducible, period.max(1))
}

/// `P_pi(s, s') = sum_a pi(s, a) P(s' | s, a)`.
pub fn induced_chain(mdp: &Mdp, policy: &Policy) -> Result<InducedChain> {
    InducedChain::from_matrix(mdp.num_states(), induced_matrix(mdp, policy))
}

pub(crate) fn induced_matrix(mdp: &Mdp, policy: &Policy) -> Vec<f64> {
    let n = mdp.num_states();
    let mut p = vec![0.0; n * n];
    for s in 0..n {
        let row = &mut p[s * n..(s + 1) * n];
        for a in 0..mdp.num_actions() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (dst, src) in row.iter_mut().zip(mdp.next_distribution(s, a)) {
                *dst += w * src;
            }
        }
    }
    p
}

/// Half the L1 distance.
pub fn tv_distance(mu: &Distribution, nu: &Distribution) -> Result<f64> {
    tv_slices(mu.probs(), nu.probs())
}

pub(crate) fn tv_slices(mu: &[f64], nu: &[f64]) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::Argument(format!("length mismatch {} vs {}", mu.len(), nu.len())));
    }
    Ok(0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Entry `t - 1` is `max_s TV(P^t(s, .), sigma)` for `t = 1..=horizon`.
pub fn mixing_curve(chain: &InducedChain, stationary: &Distribution, horizon: usize) -> Vec<f64> {
    mixing_curve_until(chain, stationary, horizon, 0.0)
}

/// Like [`mixing_curve`] but stops after the first entry below `cutoff`.
pub fn mixing_curve_until(chain: &InducedChain, stationary: &Distribution, horizon: usize, cutoff: f64) -> Vec<f64> {
    let n = chain.num_states();
    let p = chain.matrix();
    let mut power = p.to_vec();
    let mut next = vec![0.0; n * n];
    let mut curve = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let worst = (0..n)
            .map(|s| tv_slices(&power[s * n..(s + 1) * n], stationary.probs()).unwrap())
            .fold(0.0, f64::max);
        curve.push(worst);
        if worst < cutoff || t == horizon {
            break;
        }
        for s in 0..n {
            let out = &mut next[s * n..(s + 1) * n];
            out.iter_mut().for_each(|x| *x = 0.0);
            for m in 0..n {
                let w = power[s * n + m];
                if w == 0.0 {
                    continue;
                }
                for (o, q) in out.iter_mut().zip(&p[m * n..(m + 1) * n]) {
                    *o += w * q;
                }
            }
        }
        std::mem::swap(&mut power, &mut next);
    }
    curve
}

/// Exponential envelope `m1 * exp(-m2 * t)` dominating a mixing curve whose
/// entry `i` is at time `t = i + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingFit {
    pub m1: f64,
    pub m2: f64,
    /// Set when no positive rate was found while the curve stays above the floor.
    pub non_mixing: bool,
}

impl MixingFit {
    pub fn envelope(&self, t: f64) -> f64 {
        self.m1 * (-self.m2 * t).exp()
    }

    pub fn dominates(&self, curve: &[f64]) -> bool {
        curve.iter().enumerate().all(|(i, &c)| self.envelope((i + 1) as f64) >= c)
    }
}

pub const DEFAULT_FIT_FLOOR: f64 = 1e-12;

/// Fits a dominating exponential envelope: least-squares log-slope on the
/// tail half, then the smallest `m1` that makes the envelope dominate
/// `max(curve, floor)` at every recorded time.
pub fn fit_mixing_constants(curve: &[f64], floor: f64) -> Result<MixingFit> {
    if curve.is_empty() {
        return Err(Error::Data("empty mixing curve".into()));
    }
    if let Some(bad) = curve.iter().find(|&&c| !(0.0..=1.0 + 1e-9).contains(&c)) {
        return Err(Error::Data(format!("mixing curve value {bad} outside [0, 1]")));
    }
    if curve.iter().all(|&c| c <= floor) {
        return Ok(MixingFit { m1: floor, m2: 0.0, non_mixing: false });
    }
    let logs: Vec<f64> = curve.iter().map(|c| c.max(floor).ln()).collect();
    let tail_start = curve.len() / 2;
    let tail: Vec<(f64, f64)> = (tail_start..curve.len()).map(|i| ((i + 1) as f64, logs[i])).collect();
    let slope = if tail.len() < 2 {
        0.0
    } else {
        let n = tail.len() as f64;
        let mean_t = tail.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_l = tail.iter().map(|p| p.1).sum::<f64>() / n;
        let cov: f64 = tail.iter().map(|(t, l)| (t - mean_t) * (l - mean_l)).sum();
        let var: f64 = tail.iter().map(|(t, _)| (t - mean_t) * (t - mean_t)).sum();
        cov / var
    };
    // slightly under the fitted rate
    let m2 = (-slope).max(0.0) * (1.0 - 1e-9);
    let m1 = logs
        .iter()
        .enumerate()
        .map(|(i, l)| (l + m2 * (i + 1) as f64).exp())
        .fold(0.0, f64::max);
    let last = *curve.last().unwrap();
    let mut fit = MixingFit { m1: m1 * (1.0 + 1e-12), m2, non_mixing: m2 <= 1e-9 && last > floor };
    while !fit.dominates(curve) {
        fit.m1 *= 1.0 + 1e-9;
    }
    Ok(fit)
}

/// Exhaustive minimum normalized cut over subsets with `sigma(S) <= 1/2`.
pub fn conductance(chain: &InducedChain, stationary: &Distribution) -> Result<f64> {
    let n = chain.num_states();
    if n > MAX_CONDUCTANCE_STATES {
        return Err(Error::Size(format!(
            "exhaustive conductance supports at most {MAX_CONDUCTANCE_STATES} states, got {n}"
        )));
    }
    if stationary.len() != n {
        return Err(Error::Argument("stationary length mismatch".into()));
    }
    let sigma = stationary.probs();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1u32 << n) {
        let mass: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| sigma[i]).sum();
        if mass <= 0.0 || mass > 0.5 + 1e-12 {
            continue;
        }
        let mut cut = 0.0;
        for s in (0..n).filter(|i| mask >> i & 1 == 1) {
            for t in (0..n).filter(|i| mask >> i & 1 == 0) {
                cut += sigma[s] * chain.entry(s, t);
            }
        }
        best = best.min(cut / mass);
    }
    if best.is_infinite() {
        return Err(Error::Data("no subset with positive mass at most 1/2".into()));
    }
    Ok(best)
}

/// `(I + P) / 2`.
pub fn lazy_chain(chain: &InducedChain) -> InducedChain {
    let n = chain.num_states();
    let mut p = chain.matrix().to_vec();
    for s in 0..n {
        for t in 0..n {
            let v = &mut p[s * n + t];
            *v = if s == t { (1.0 + *v) / 2.0 } else { *v / 2.0 };
        }
    }
    InducedChain::from_matrix(n, p).expect("lazy version of a stochastic matrix is stochastic")
}

/// `sum_s measure(s) sum_a pi_ref(s, a) ln(pi_ref(s, a) / pi(s, a))` with
/// `0 ln 0 = 0`; returns [`KL_INFINITE`] when the support condition fails.
pub fn kl_policy(pi_ref: &Policy, pi: &Policy, measure: &Distribution) -> f64 {
    let mut total = 0.0;
    for (s, &w) in measure.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for (p, q) in pi_ref.row(s).iter().zip(pi.row(s)) {
            if *p == 0.0 {
                continue;
            }
            if *q == 0.0 {
                return KL_INFINITE;
            }
            row += p * (p / q).ln();
        }
        total += w * row;
    }
    total
}

/// Mixing curve plus fitted envelope for one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub tv_curve: Vec<f64>,
    pub m1: f64,
    pub m2: f64,
    pub non_mixing: bool,
    pub conductance: Option<f64>,
    #[serde(rename = "radius")]
    pub kl_radius: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingOptions {
    pub horizon: usize,
    pub cutoff: f64,
    pub floor: f64,
}

impl Default for MixingOptions {
    fn default() -> Self {
        Self { horizon: 200, cutoff: 1e-10, floor: DEFAULT_FIT_FLOOR }
    }
}

pub fn mixing_report(chain: &InducedChain, stationary: &Distribution, opts: MixingOptions) -> Result<MixingReport> {
    let tv_curve = mixing_curve_until(chain, stationary, opts.horizon, opts.cutoff);
    let fit = fit_mixing_constants(&tv_curve, opts.floor)?;
    let conductance = if chain.num_states() <= MAX_CONDUCTANCE_STATES {
        Some(conductance(chain, stationary)?)
    } else {
        None
    };
    Ok(MixingReport { tv_curve, m1: fit.m1, m2: fit.m2, non_mixing: fit.non_mixing, conductance, kl_radius: None })
}

/// Which state measure defines ball membership.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMeasure {
    /// Stationary distribution of the reference policy.
    #[default]
    Stationary,
    /// Every per-state visitation distribution of the reference policy;
    /// membership requires the bound under all of them.
    Visitation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditFailure {
    pub index: usize,
    pub reason: String,
}

/// Empirical constants over the members of a KL ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlBallAudit {
    pub radius: f64,
    pub measure: BallMeasure,
    /// `C`: worst `max(ref/pi, pi/ref)` over supported pairs.
    pub policy_ratio_bound: f64,
    pub stationary_ratio_bound: f64,
    /// `p_min`.
    pub min_stationary_mass: f64,
    /// Worst prefactor over members (`C_2` in the explicit schedule).
    pub m1: f64,
    /// Worst rate over members (`C_1` in the explicit schedule).
    pub m2: f64,
    pub max_member_kl: f64,
    pub members: Vec<usize>,
    pub outside: Vec<usize>,
    pub failures: Vec<AuditFailure>,
}

struct MemberStats {
    ratio: f64,
    stationary_ratio: f64,
    min_mass: f64,
    fit: MixingFit,
    kl: f64,
}

enum MemberOutcome {
    Outside,
    Member(MemberStats),
    Failed(String),
}

/// Audits the members of `{ pi : K(pi_ref, pi) <= radius }` among `policies`.
pub fn kl_ball_audit(
    mdp: &Mdp,
    pi_ref: &Policy,
    policies: &[Policy],
    radius: f64,
    measure: BallMeasure,
    opts: MixingOptions,
) -> Result<KlBallAudit> {
    let ref_chain = induced_chain(mdp, pi_ref)?;
    let ref_sigma = ref_chain.stationary()?;
    let measures: Vec<Distribution> = match measure {
        BallMeasure::Stationary => vec![ref_sigma.clone()],
        BallMeasure::Visitation => (0..mdp.num_states())
            .map(|s| exact::visitation(mdp, pi_ref, &Distribution::dirac(mdp.num_states(), s)))
            .collect::<Result<_>>()?,
    };

    let outcomes: Vec<MemberOutcome> = policies
        .par_iter()
        .map(|pi| {
            let kl = measures.iter().map(|m| kl_policy(pi_ref, pi, m)).fold(0.0, f64::max);
            if kl > radius {
                return MemberOutcome::Outside;
            }
            match member_stats(mdp, pi_ref, &ref_sigma, pi, opts) {
                Ok(mut stats) => {
                    stats.kl = kl;
                    MemberOutcome::Member(stats)
                }
                Err(e) => MemberOutcome::Failed(e.to_string()),
            }
        })
        .collect();

    let mut audit = KlBallAudit {
        radius,
        measure,
        policy_ratio_bound: 1.0,
        stationary_ratio_bound: 1.0,
        min_stationary_mass: f64::INFINITY,
        m1: 0.0,
        m2: f64::INFINITY,
        max_member_kl: 0.0,
        members: Vec::new(),
        outside: Vec::new(),
        failures: Vec::new(),
    };
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            MemberOutcome::Outside => audit.outside.push(index),
            MemberOutcome::Failed(reason) => audit.failures.push(AuditFailure { index, reason }),
            MemberOutcome::Member(st) => {
                audit.members.push(index);
                audit.policy_ratio_bound = audit.policy_ratio_bound.max(st.ratio);
                audit.stationary_ratio_bound = audit.stationary_ratio_bound.max(st.stationary_ratio);
                audit.min_stationary_mass = audit.min_stationary_mass.min(st.min_mass);
                audit.m1 = audit.m1.max(st.fit.m1);
                audit.m2 = audit.m2.min(st.fit.m2);
                audit.max_member_kl = audit.max_member_kl.max(st.kl);
            }
        }
    }
    if audit.members.is_empty() {
        audit.m2 = 0.0;
        audit.min_stationary_mass = 0.0;
    }
    Ok(audit)
}

fn member_stats(
    mdp: &Mdp,
    pi_ref: &Policy,
    ref_sigma: &Distribution,
    pi: &Policy,
    opts: MixingOptions,
) -> Result<MemberStats> {
    let chain = induced_chain(mdp, pi)?;
    let sigma = chain.stationary()?;
    let mut ratio: f64 = 1.0;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let r = pi_ref.prob(s, a);
            if r > 0.0 {
                let p = pi.prob(s, a);
                ratio = ratio.max(if p == 0.0 { f64::INFINITY } else { (r / p).max(p / r) });
            }
        }
    }
    let mut stationary_ratio: f64 = 1.0;
    for (a, b) in ref_sigma.probs().iter().zip(sigma.probs()) {
        stationary_ratio = stationary_ratio.max((a / b).max(b / a));
    }
    let min_mass = sigma.probs().iter().cloned().fold(f64::INFINITY, f64::min);
    let curve = mixing_curve_until(&chain, &sigma, opts.horizon, opts.cutoff);
    let fit = fit_mixing_constants(&curve, opts.floor)?;
    Ok(MemberStats { ratio, stationary_ratio, min_mass, fit, kl: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(p: f64, q: f64) -> InducedChain {
        InducedChain::from_matrix(2, vec![1.0 - p, p, q, 1.0 - q]).unwrap()
    }

    #[test]
    fn directed_cycle_has_period_three() {
        let c = InducedChain::from_matrix(3, vec![0., 1., 0., 0., 0., 1., 1., 0., 0.]).unwrap();
        assert!(c.irreducible);
        assert_eq!(c.period, 3);
        assert!(!c.aperiodic);
        assert!(matches!(c.stationary(), Err(Error::Structure(_))));
    }

    #[test]
    fn lazy_chain_is_aperiodic() {
        let c = InducedChain::from_matrix(3, vec![0., 1., 0., 0., 0., 1., 1., 0., 0.]).unwrap();
        let lazy = lazy_chain(&c);
        assert!(lazy.irreducible && lazy.aperiodic);
        assert_eq!(lazy.period, 1);
        let sigma = lazy.stationary().unwrap();
        for p in sigma.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lazy_of_identity_and_swap() {
        let id = InducedChain::from_matrix(2, vec![1., 0., 0., 1.]).unwrap();
        assert_eq!(lazy_chain(&id).matrix(), id.matrix());
        assert!(!id.irreducible);
        let swap = InducedChain::from_matrix(2, vec![0., 1., 1., 0.]).unwrap();
        assert_eq!(lazy_chain(&swap).matrix(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn tv_examples() {
        let mu = Distribution::new(vec![0.7, 0.3]).unwrap();
        let nu = Distribution::new(vec![0.4, 0.6]).unwrap();
        // subset enumeration: {0} gives 0.3, {1} gives 0.3, {} and {0,1} give 0
        let brute = [0.0, 0.3f64, 0.3, 0.0].iter().cloned().fold(0.0, f64::max);
        assert!((tv_distance(&mu, &nu).unwrap() - brute).abs() < 1e-15);
        assert_eq!(tv_distance(&mu, &mu).unwrap(), 0.0);
        assert_eq!(tv_distance(&Distribution::dirac(3, 0), &Distribution::dirac(3, 2)).unwrap(), 1.0);
        assert!(tv_distance(&mu, &Distribution::uniform(3)).is_err());
    }

    #[test]
    fn two_state_stationary_and_curve() {
        let (p, q) = (0.3, 0.1);
        let c = two_state(p, q);
        let sigma = c.stationary().unwrap();
        assert!((sigma.probs()[0] - q / (p + q)).abs() < 1e-12);
        assert!((sigma.probs()[1] - p / (p + q)).abs() < 1e-12);
        // P^t(0, 1) - sigma(1) = -(p/(p+q)) (1-p-q)^t; worst start is state 0 here
        let curve = mixing_curve(&c, &sigma, 30);
        for (i, v) in curve.iter().enumerate() {
            let t = (i + 1) as i32;
            let expected = (p / (p + q)).max(q / (p + q)) * (1.0 - p - q).abs().powi(t);
            assert!((v - expected).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn identical_rows_mix_in_one_step_and_identity_never() {
        let c = InducedChain::from_matrix(2, vec![0.25, 0.75, 0.25, 0.75]).unwrap();
        let sigma = c.stationary().unwrap();
        assert!(mixing_curve(&c, &sigma, 5).iter().all(|v| *v < 1e-15));
        let id = InducedChain::from_matrix(2, vec![1., 0., 0., 1.]).unwrap();
        let sigma = Distribution::new(vec![0.4, 0.6]).unwrap();
        for v in mixing_curve(&id, &sigma, 5) {
            assert!((v - 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn fit_exact_exponential() {
        let curve: Vec<f64> = (1..=40).map(|t| (-0.5 * t as f64).exp()).collect();
        let fit = fit_mixing_constants(&curve, DEFAULT_FIT_FLOOR).unwrap();
        assert!(fit.m2 >= 0.45 && fit.m2 <= 0.5, "{fit:?}");
        assert!(fit.dominates(&curve));
        assert!(!fit.non_mixing);
    }

    #[test]
    fn fit_constant_and_zero_curves() {
        let fit = fit_mixing_constants(&[0.3; 20], DEFAULT_FIT_FLOOR).unwrap();
        assert!(fit.m2 <= 1e-9 && fit.m1 >= 0.3 && fit.non_mixing);
        assert!(fit.dominates(&[0.3; 20]));
        let fit = fit_mixing_constants(&[0.0; 10], DEFAULT_FIT_FLOOR).unwrap();
        assert!(fit.dominates(&[0.0; 10]));
        assert!(fit_mixing_constants(&[1.5], DEFAULT_FIT_FLOOR).is_err());
    }

    #[test]
    fn conductance_two_state_and_disconnected() {
        let (p, q) = (0.3, 0.1);
        let c = two_state(p, q);
        let sigma = c.stationary().unwrap();
        // sigma = (0.25, 0.75): only {0} has mass <= 1/2, cut = sigma0 * p
        let expected = p;
        assert!((conductance(&c, &sigma).unwrap() - expected).abs() < 1e-12);
        let id = InducedChain::from_matrix(2, vec![1., 0., 0., 1.]).unwrap();
        assert_eq!(conductance(&id, &Distribution::uniform(2)).unwrap(), 0.0);
    }

    #[test]
    fn conductance_complete_uniform_chain() {
        let n = 6;
        let c = InducedChain::from_matrix(n, vec![1.0 / n as f64; n * n]).unwrap();
        let sigma = Distribution::uniform(n);
        // Phi(S) = (n - |S|) / n, minimized at the largest admissible |S| = n/2
        let expected = (n - n / 2) as f64 / n as f64;
        assert!((conductance(&c, &sigma).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn conductance_size_limit() {
        let n = 21;
        let c = InducedChain::from_matrix(n, vec![1.0 / n as f64; n * n]).unwrap();
        assert!(matches!(conductance(&c, &Distribution::uniform(n)), Err(Error::Size(_))));
    }

    #[test]
    fn kl_examples() {
        let pi_ref = Policy::new(2, vec![1.0, 0.0]).unwrap();
        let pi = Policy::new(2, vec![0.5, 0.5]).unwrap();
        let m = Distribution::dirac(1, 0);
        assert!((kl_policy(&pi_ref, &pi, &m) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(kl_policy(&pi, &pi, &m), 0.0);
        assert_eq!(kl_policy(&pi, &pi_ref, &m), KL_INFINITE);
    }
}
