use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::BinaryDataset;
use crate::error::{Error, Result};
use crate::model::likelihood::check_parameters;
use crate::model::{
    clamp_theta, log_collapsed_allocation_posterior, normalize_log_weights, sample_beta,
    sample_categorical, sample_dirichlet, Priors,
};

/// One chain's position: (K, z, pi, theta) plus the sufficient statistics
/// and the working copy of the data with current imputations.
///
/// Allocations are 0-based. `theta[k][j]` is the probability of a one for
/// variable `j` in component `k`. A cell is *counted* in the sufficient
/// statistics when it is observed, or when imputation is enabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    k: usize,
    z: Vec<usize>,
    pi: Vec<f64>,
    theta: Vec<Vec<f64>>,
    counts: Vec<usize>,
    successes: Vec<Vec<u32>>,
    trials: Vec<Vec<u32>>,
    x_work: Vec<u8>,
    counted: Vec<bool>,
    missing_cells: Vec<usize>,
    p: usize,
    impute: bool,
}

impl MixtureState {
    /// Builds a state from explicit parameters. Missing cells start at 0 and
    /// are filled by [`MixtureState::impute_missing`].
    pub fn new(
        data: &BinaryDataset,
        z: Vec<usize>,
        pi: Vec<f64>,
        theta: Vec<Vec<f64>>,
        impute: bool,
    ) -> Result<Self> {
        check_parameters(data, &pi, &theta)?;
        let k = pi.len();
        if z.len() != data.n() {
            return Err(Error::Domain("allocation vector length differs from n".into()));
        }
        if let Some(bad) = z.iter().find(|c| **c >= k) {
            return Err(Error::Domain(format!("allocation {bad} out of range for K = {k}")));
        }
        if pi.iter().any(|w| *w <= 0.0) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("pi must be strictly positive and sum to 1".into()));
        }
        let (n, p) = (data.n(), data.p());
        let mut x_work = Vec::with_capacity(n * p);
        let mut counted = Vec::with_capacity(n * p);
        let mut missing_cells = Vec::new();
        for i in 0..n {
            x_work.extend_from_slice(data.row(i));
            for (j, obs) in data.observed_row(i).iter().enumerate() {
                counted.push(*obs || impute);
                if !obs {
                    missing_cells.push(i * p + j);
                }
            }
        }
        let mut state = Self {
            k,
            z,
            pi,
            theta,
            counts: Vec::new(),
            successes: Vec::new(),
            trials: Vec::new(),
            x_work,
            counted,
            missing_cells,
            p,
            impute,
        };
        state.recompute_statistics();
        Ok(state)
    }

    /// Draws K, pi and theta from the priors and z uniformly over the K
    /// components; missing cells are then imputed from the drawn parameters.
    pub fn from_prior<R: Rng + ?Sized>(
        data: &BinaryDataset,
        priors: &Priors,
        impute: bool,
        rng: &mut R,
    ) -> Result<Self> {
        priors.validate()?;
        let k = priors.sample_k(rng);
        let pi = sample_dirichlet(&vec![priors.concentration(); k], rng);
        let theta = (0..k)
            .map(|_| {
                (0..data.p())
                    .map(|_| clamp_theta(sample_beta(priors.alpha, priors.beta, rng)))
                    .collect()
            })
            .collect();
        let z = (0..data.n()).map(|_| rng.random_range(0..k)).collect();
        let mut state = Self::new(data, z, pi, theta, impute)?;
        state.impute_missing(1.0, rng);
        Ok(state)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Ones among counted cells, per component and variable.
    pub fn successes(&self) -> &[Vec<u32>] {
        &self.successes
    }

    /// Counted cells per component and variable.
    pub fn trials(&self) -> &[Vec<u32>] {
        &self.trials
    }

    pub fn imputes(&self) -> bool {
        self.impute
    }

    /// Working value of cell (i, j): observed value or current imputation.
    pub fn value(&self, i: usize, j: usize) -> u8 {
        self.x_work[i * self.p + j]
    }

    /// Flat indices (`i * p + j`) of the unobserved cells.
    pub fn missing_cells(&self) -> &[usize] {
        &self.missing_cells
    }

    pub fn n_nonempty(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }

    pub fn n_empty(&self) -> usize {
        self.k - self.n_nonempty()
    }

    fn recompute_statistics(&mut self) {
        let p = self.p;
        self.counts = vec![0; self.k];
        self.successes = vec![vec![0; p]; self.k];
        self.trials = vec![vec![0; p]; self.k];
        for (i, &c) in self.z.iter().enumerate() {
            self.counts[c] += 1;
            for j in 0..p {
                let idx = i * p + j;
                if self.counted[idx] {
                    self.trials[c][j] += 1;
                    self.successes[c][j] += u32::from(self.x_work[idx]);
                }
            }
        }
    }

    /// Verifies the cached sufficient statistics against a full recount.
    pub fn check_consistency(&self) -> Result<()> {
        let mut fresh = self.clone();
        fresh.recompute_statistics();
        if fresh.counts != self.counts
            || fresh.successes != self.successes
            || fresh.trials != self.trials
        {
            return Err(Error::Domain("cached sufficient statistics are stale".into()));
        }
        if (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 || self.pi.iter().any(|w| *w <= 0.0) {
            return Err(Error::Domain("pi is not a positive probability vector".into()));
        }
        if self.theta.iter().flatten().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(Error::Domain("theta entry outside (0, 1)".into()));
        }
        Ok(())
    }

    /// pi | z ~ Dirichlet(gamma + n_k).
    pub fn update_pi<R: Rng + ?Sized>(&mut self, priors: &Priors, rng: &mut R) {
        let g = priors.concentration();
        let alphas: Vec<f64> = self.counts.iter().map(|&c| g + c as f64).collect();
        self.pi = sample_dirichlet(&alphas, rng);
    }

    /// theta_jk | x, z ~ Beta(alpha + h s_jk, beta + h (t_jk - s_jk)) under heat `h`.
    pub fn update_theta<R: Rng + ?Sized>(&mut self, priors: &Priors, heat: f64, rng: &mut R) {
        for k in 0..self.k {
            for j in 0..self.p {
                let s = self.successes[k][j] as f64;
                let t = self.trials[k][j] as f64;
                let a = priors.alpha + heat * s;
                let b = priors.beta + heat * (t - s);
                self.theta[k][j] = clamp_theta(sample_beta(a, b, rng));
            }
        }
    }

    fn log_theta_tables(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lt = Vec::with_capacity(self.k * self.p);
        let mut l1t = Vec::with_capacity(self.k * self.p);
        for col in &self.theta {
            for t in col {
                lt.push(t.ln());
                l1t.push((1.0 - t).ln());
            }
        }
        (lt, l1t)
    }

    fn allocation_log_weights(&self, i: usize, heat: f64, lt: &[f64], l1t: &[f64], out: &mut [f64]) {
        let p = self.p;
        let row = &self.x_work[i * p..(i + 1) * p];
        let counted = &self.counted[i * p..(i + 1) * p];
        for (k, w) in out.iter_mut().enumerate() {
            let (lt_k, l1t_k) = (&lt[k * p..(k + 1) * p], &l1t[k * p..(k + 1) * p]);
            let mut ll = 0.0;
            for j in 0..p {
                if counted[j] {
                    ll += if row[j] == 1 { lt_k[j] } else { l1t_k[j] };
                }
            }
            *w = self.pi[k].ln() + heat * ll;
        }
    }

    /// Full-conditional probabilities of z_i under heat `h`:
    /// proportional to pi_k times the component density raised to `h`.
    pub fn allocation_probabilities(&self, i: usize, heat: f64) -> Vec<f64> {
        let (lt, l1t) = self.log_theta_tables();
        let mut w = vec![0.0; self.k];
        self.allocation_log_weights(i, heat, &lt, &l1t, &mut w);
        normalize_log_weights(&mut w);
        w
    }

    /// Resamples every z_i from its full conditional and refreshes the statistics.
    pub fn update_z<R: Rng + ?Sized>(&mut self, heat: f64, rng: &mut R) {
        let (lt, l1t) = self.log_theta_tables();
        let mut w = vec![0.0; self.k];
        for i in 0..self.n() {
            self.allocation_log_weights(i, heat, &lt, &l1t, &mut w);
            normalize_log_weights(&mut w);
            let new = sample_categorical(&w, rng);
            let old = self.z[i];
            if new != old {
                self.move_unit(i, old, new);
            }
        }
    }

    fn move_unit(&mut self, i: usize, from: usize, to: usize) {
        let p = self.p;
        self.counts[from] -= 1;
        self.counts[to] += 1;
        for j in 0..p {
            let idx = i * p + j;
            if self.counted[idx] {
                let x = u32::from(self.x_work[idx]);
                self.trials[from][j] -= 1;
                self.successes[from][j] -= x;
                self.trials[to][j] += 1;
                self.successes[to][j] += x;
            }
        }
        self.z[i] = to;
    }

    /// Redraws every unobserved cell from its component's Bernoulli, tempered
    /// by `h`. No-op when imputation is off or nothing is missing.
    pub fn impute_missing<R: Rng + ?Sized>(&mut self, heat: f64, rng: &mut R) {
        if !self.impute {
            return;
        }
        for m in 0..self.missing_cells.len() {
            let idx = self.missing_cells[m];
            let (i, j) = (idx / self.p, idx % self.p);
            let k = self.z[i];
            let t = self.theta[k][j];
            let p1 = if heat == 1.0 {
                t
            } else {
                let a = heat * t.ln();
                let b = heat * (1.0 - t).ln();
                1.0 / (1.0 + (b - a).exp())
            };
            let new = u8::from(rng.random::<f64>() < p1);
            let old = self.x_work[idx];
            if new != old {
                self.x_work[idx] = new;
                if new == 1 {
                    self.successes[k][j] += 1;
                } else {
                    self.successes[k][j] -= 1;
                }
            }
        }
    }

    /// Complete-data log-likelihood over counted cells (observed plus
    /// imputed), excluding the allocation term log pi_{z_i}.
    pub fn log_data_likelihood(&self) -> f64 {
        let mut total = 0.0;
        for k in 0..self.k {
            for j in 0..self.p {
                let s = self.successes[k][j] as f64;
                let f = self.trials[k][j] as f64 - s;
                let t = self.theta[k][j];
                if s > 0.0 {
                    total += s * t.ln();
                }
                if f > 0.0 {
                    total += f * (1.0 - t).ln();
                }
            }
        }
        total
    }

    /// Collapsed log p(z, K, x) on the observed cells.
    pub fn log_collapsed_posterior(&self, data: &BinaryDataset, priors: &Priors) -> Result<f64> {
        log_collapsed_allocation_posterior(data, &self.z, self.k, priors)
    }

    /// Inserts a component at `pos` with weight `w`, scaling the others by `1 - w`.
    pub(crate) fn insert_component(&mut self, pos: usize, w: f64, theta: Vec<f64>) {
        for v in self.pi.iter_mut() {
            *v *= 1.0 - w;
        }
        self.pi.insert(pos, w);
        self.renormalize_pi();
        self.theta.insert(pos, theta);
        self.counts.insert(pos, 0);
        self.successes.insert(pos, vec![0; self.p]);
        self.trials.insert(pos, vec![0; self.p]);
        for c in self.z.iter_mut() {
            if *c >= pos {
                *c += 1;
            }
        }
        self.k += 1;
    }

    /// Removes the empty component at `pos` and renormalizes the weights.
    pub(crate) fn remove_component(&mut self, pos: usize) {
        debug_assert_eq!(self.counts[pos], 0);
        self.pi.remove(pos);
        self.renormalize_pi();
        self.theta.remove(pos);
        self.counts.remove(pos);
        self.successes.remove(pos);
        self.trials.remove(pos);
        for c in self.z.iter_mut() {
            if *c > pos {
                *c -= 1;
            }
        }
        self.k -= 1;
    }

    fn renormalize_pi(&mut self) {
        for v in self.pi.iter_mut() {
            *v = v.max(f64::MIN_POSITIVE);
        }
        let total: f64 = self.pi.iter().sum();
        for v in self.pi.iter_mut() {
            *v /= total;
        }
    }

    /// Relabels components: old label `k` becomes `perm[k]`.
    pub fn permute_labels(&mut self, perm: &[usize]) -> Result<()> {
        if perm.len() != self.k || !is_permutation(perm) {
            return Err(Error::Domain("not a permutation of the component labels".into()));
        }
        reorder(&mut self.pi, perm);
        reorder(&mut self.theta, perm);
        reorder(&mut self.counts, perm);
        reorder(&mut self.successes, perm);
        reorder(&mut self.trials, perm);
        for c in self.z.iter_mut() {
            *c = perm[*c];
        }
        Ok(())
    }
}

/// Moves `v[old]` to position `perm[old]`.
fn reorder<T>(v: &mut Vec<T>, perm: &[usize]) {
    let mut out: Vec<Option<T>> = (0..v.len()).map(|_| None).collect();
    for (old, item) in v.drain(..).enumerate() {
        out[perm[old]] = Some(item);
    }
    *v = out.into_iter().map(Option::unwrap).collect();
}

pub(crate) fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter().all(|&v| v < perm.len() && !std::mem::replace(&mut seen[v], true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> BinaryDataset {
        BinaryDataset::from_rows(&[
            vec![Some(1), Some(0), None],
            vec![Some(1), Some(1), Some(1)],
            vec![None, Some(0), Some(0)],
            vec![Some(0), Some(0), Some(1)],
        ])
        .unwrap()
    }

    #[test]
    fn statistics_track_updates() {
        let d = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pr = Priors::with_k_max(5);
        let mut s = MixtureState::from_prior(&d, &pr, true, &mut rng).unwrap();
        for _ in 0..50 {
            s.update_pi(&pr, &mut rng);
            s.update_theta(&pr, 0.9, &mut rng);
            s.update_z(0.9, &mut rng);
            s.impute_missing(0.9, &mut rng);
            s.check_consistency().unwrap();
        }
    }

    #[test]
    fn without_imputation_missing_cells_do_not_count() {
        let d = toy();
        let s = MixtureState::new(&d, vec![0; 4], vec![1.0], vec![vec![0.5; 3]], false).unwrap();
        assert_eq!(s.trials()[0], vec![3, 4, 3]);
        assert_eq!(s.successes()[0], vec![2, 1, 2]);
        let s = MixtureState::new(&d, vec![0; 4], vec![1.0], vec![vec![0.5; 3]], true).unwrap();
        assert_eq!(s.trials()[0], vec![4, 4, 4]);
    }

    #[test]
    fn insert_and_remove_component() {
        let d = toy();
        let mut s = MixtureState::new(
            &d,
            vec![0, 1, 1, 0],
            vec![0.4, 0.6],
            vec![vec![0.5; 3], vec![0.2; 3]],
            false,
        )
        .unwrap();
        s.insert_component(1, 0.5, vec![0.9; 3]);
        assert_eq!(s.k(), 3);
        assert_eq!(s.z(), &[0, 2, 2, 0]);
        assert!((s.pi()[0] - 0.2).abs() < 1e-15 && (s.pi()[1] - 0.5).abs() < 1e-15);
        assert_eq!(s.n_empty(), 1);
        s.check_consistency().unwrap();
        s.remove_component(1);
        assert_eq!(s.z(), &[0, 1, 1, 0]);
        assert!((s.pi()[0] - 0.4).abs() < 1e-12);
        s.check_consistency().unwrap();
    }

    #[test]
    fn permutation_keeps_statistics() {
        let d = toy();
        let mut s = MixtureState::new(
            &d,
            vec![0, 1, 2, 0],
            vec![0.2, 0.3, 0.5],
            vec![vec![0.5; 3], vec![0.2; 3], vec![0.7; 3]],
            false,
        )
        .unwrap();
        let before = s.log_data_likelihood();
        s.permute_labels(&[2, 0, 1]).unwrap();
        assert_eq!(s.z(), &[2, 0, 1, 2]);
        assert_eq!(s.pi(), &[0.3, 0.5, 0.2]);
        s.check_consistency().unwrap();
        assert_eq!(before, s.log_data_likelihood());
        assert!(s.permute_labels(&[0, 0, 1]).is_err());
    }

    #[test]
    fn rejects_bad_pi() {
        let d = toy();
        let r = MixtureState::new(&d, vec![0; 4], vec![0.5, 0.4], vec![vec![0.5; 3]; 2], false);
        assert!(r.is_err());
    }
}
