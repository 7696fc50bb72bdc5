//! The Gibbs sampler.
//!
//! One iteration updates, in order: the truncated-normal latent matrix, all
//! site coefficient vectors in a two-phase checkerboard sweep, the scalar
//! spatial-covariate effect, and the coefficient precision matrix. Site
//! conditionals are conjugate multivariate normals
//!
//! ```text
//! Lambda_j = X'X + n(s_j) P          (P = current precision)
//! b_j      = X'(Z_.j - w_j g 1) + P sum_{r in dj} beta*(s_r)
//! beta*(s_j) | rest ~ MVN(Lambda_j^-1 b_j, Lambda_j^-1)
//! ```
//!
//! so `X'X` is shared across sites and `Lambda_j` only depends on the site
//! degree, letting one Cholesky per distinct degree serve the whole sweep.
//! Same-color sites are conditionally independent, which makes each phase
//! embarrassingly parallel; every random draw comes from a counter stream
//! addressed by (iteration, update, site, subject), so results are identical
//! for any worker count.

pub mod truncnorm;
pub mod wishart;

use std::marker::PhantomData;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{config_err, numerical_err, Error, Result};
use crate::inference::PosteriorSummary;
use crate::lattice::Lattice;
use crate::predict::LikelihoodTrace;
use crate::rng::{Streams, UpdateKind};
use truncnorm::sample_truncated_normal;

/// Run-length and reproducibility knobs for one sampler run.
#[derive(Clone, Debug)]
pub struct McmcConfig {
    pub iterations: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub chains: u64,
    /// Wishart prior degrees of freedom nu; 0 is the improper default and
    /// the posterior stays proper as long as df = nu + M - c > P - 1.
    pub wishart_df: f64,
    pub threads: usize,
    /// Debug mode: when false, the intercept field is split into a separate
    /// fixed effect alpha plus zero-centered beta, the parameterization with
    /// the slow-mixing fixed effects.
    pub reparameterize: bool,
    /// Debug mode: update color class B before A.
    pub swap_phases: bool,
    /// Progress lines to stderr every this many iterations.
    pub log_every: Option<u64>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        // 2-D study defaults; for 3-D scale runs 150k/50k with thinning is
        // the suggested regime.
        McmcConfig {
            iterations: 12_000,
            burn_in: 2_000,
            thin: 1,
            seed: 0,
            chains: 1,
            wishart_df: 0.0,
            threads: 1,
            reparameterize: true,
            swap_phases: false,
            log_every: None,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return config_err("iterations must be positive");
        }
        if self.thin == 0 {
            return config_err("thin must be positive");
        }
        if self.chains == 0 {
            return config_err("chains must be positive");
        }
        if self.burn_in >= self.iterations {
            return config_err(format!(
                "burn-in {} leaves no retained iterations out of {}",
                self.burn_in, self.iterations
            ));
        }
        if !self.wishart_df.is_finite() || self.wishart_df < 0.0 {
            return config_err("wishart df must be a nonnegative real");
        }
        if self.threads == 0 {
            return config_err("threads must be positive");
        }
        Ok(())
    }

    /// Is this 1-based iteration kept after burn-in and thinning?
    #[inline]
    pub fn is_retained(&self, iteration: u64) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in - 1).is_multiple_of(self.thin)
    }

    pub fn retained_count(&self) -> u64 {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// All current unknowns of one chain.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub m: usize,
    pub p: usize,
    pub n: usize,
    /// M x P, site-major: the spatially varying coefficients beta*(s_j)
    /// (or the zero-centered beta in the split debug parameterization).
    pub beta_star: Vec<f64>,
    /// Fixed effect alpha, present only in the split parameterization.
    pub alpha_split: Option<Vec<f64>>,
    pub gamma: f64,
    /// P x P precision of the pairwise-difference prior.
    pub precision: DMatrix<f64>,
    /// M x N latent normals, site-major so each site conditional reads a
    /// contiguous subject vector.
    pub latent: Vec<f64>,
    pub iteration: u64,
}

impl ModelState {
    /// Effective coefficient of column `p` at `site` (adds alpha back in the
    /// split parameterization).
    #[inline]
    pub fn coefficient(&self, site: usize, p: usize) -> f64 {
        let b = self.beta_star[site * self.p + p];
        match &self.alpha_split {
            Some(alpha) => b + alpha[p],
            None => b,
        }
    }

    /// Materialize effective coefficients into `out` (M x P).
    pub fn effective_coefficients<'a>(&'a self, out: &'a mut Vec<f64>) -> &'a [f64] {
        match &self.alpha_split {
            None => &self.beta_star,
            Some(alpha) => {
                out.clear();
                out.extend_from_slice(&self.beta_star);
                for chunk in out.chunks_mut(self.p) {
                    for (v, a) in chunk.iter_mut().zip(alpha) {
                        *v += a;
                    }
                }
                out
            }
        }
    }
}

/// In-memory sinks fed after burn-in/thinning.
pub struct RunSinks {
    pub summary: PosteriorSummary,
    pub likelihood: Option<LikelihoodTrace>,
}

impl RunSinks {
    fn accumulate(&mut self, dataset: &Dataset, state: &ModelState, scratch: &mut Vec<f64>) {
        let beta_eff: &[f64] = state.effective_coefficients(scratch);
        self.summary.accumulate(dataset, beta_eff, state.gamma, &state.precision, state.iteration);
        if let Some(trace) = &mut self.likelihood {
            trace.accumulate(dataset, beta_eff, state.gamma, state.iteration);
        }
    }
}

/// Hook invoked during `run`, used for periodic checkpoints.
pub type IterationHook<'h> = (u64, &'h dyn Fn(&ModelState, &RunSinks) -> Result<()>);

/// Per-site update covariance factor, cached per lattice degree.
struct DegreeChol {
    l: DMatrix<f64>,
}

/// Shared mutable coefficient buffer for the color phases.
///
/// Soundness rests on the two-color schedule: inside one phase every updated
/// site appears exactly once (disjoint writes) and all reads target sites of
/// the other color (never written in that phase).
struct SharedCoeffs<'a> {
    ptr: *mut f64,
    len: usize,
    _marker: PhantomData<&'a mut [f64]>,
}

unsafe impl Send for SharedCoeffs<'_> {}
unsafe impl Sync for SharedCoeffs<'_> {}

impl<'a> SharedCoeffs<'a> {
    fn new(slice: &'a mut [f64]) -> Self {
        SharedCoeffs { ptr: slice.as_mut_ptr(), len: slice.len(), _marker: PhantomData }
    }

    #[inline]
    unsafe fn read(&self, idx: usize) -> f64 {
        debug_assert!(idx < self.len);
        *self.ptr.add(idx)
    }

    #[inline]
    unsafe fn write(&self, idx: usize, v: f64) {
        debug_assert!(idx < self.len);
        *self.ptr.add(idx) = v;
    }
}

/// Fixed-order dot product (4 independent accumulators, deterministic).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let quads = a.len() / 4;
    for q in 0..quads {
        let i = 4 * q;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * quads..a.len() {
        s += a[i] * b[i];
    }
    s
}

struct SiteScratch {
    b: DVector<f64>,
    noise: DVector<f64>,
    nbr_sum: DVector<f64>,
}

impl SiteScratch {
    fn new(p: usize) -> Self {
        SiteScratch { b: DVector::zeros(p), noise: DVector::zeros(p), nbr_sum: DVector::zeros(p) }
    }
}

/// The sampler for one chain over one dataset.
pub struct GibbsEngine<'a> {
    pub lattice: &'a Lattice,
    pub dataset: &'a Dataset,
    pub config: McmcConfig,
    chain: u64,
    streams: Streams,
    color_a: Vec<u32>,
    color_b: Vec<u32>,
    xtx: DMatrix<f64>,
    col_sums: Vec<f64>,
    sum_w_sq: f64,
    has_w: bool,
    degrees_present: Vec<usize>,
    pool: rayon::ThreadPool,
}

impl<'a> GibbsEngine<'a> {
    pub fn new(
        lattice: &'a Lattice,
        dataset: &'a Dataset,
        config: McmcConfig,
        chain: u64,
    ) -> Result<Self> {
        config.validate()?;
        if dataset.num_sites() != lattice.num_sites() {
            return crate::error::data_err(format!(
                "dataset covers {} sites, lattice has {}",
                dataset.num_sites(),
                lattice.num_sites()
            ));
        }
        if chain >= config.chains {
            return config_err(format!("chain id {chain} out of range for {} chains", config.chains));
        }
        let design = &dataset.design;
        let p = design.num_coefficients();
        let n = design.num_subjects();

        let mut xtx = DMatrix::zeros(p, p);
        let mut col_sums = vec![0.0; p];
        for a in 0..p {
            col_sums[a] = design.column(a).iter().sum();
            for b in a..p {
                let v = dot(design.column(a), design.column(b));
                xtx[(a, b)] = v;
                xtx[(b, a)] = v;
            }
        }

        let (has_w, sum_w_sq) = match &dataset.spatial_covariate {
            Some(sc) => (true, sc.values.iter().map(|w| w * w).sum()),
            None => (false, 0.0),
        };
        if has_w && sum_w_sq == 0.0 {
            eprintln!("warning: spatial covariate is identically zero; gamma pinned at 0");
        }

        let mut degrees_present: Vec<usize> =
            (0..lattice.num_sites()).map(|j| lattice.degree(j)).collect();
        degrees_present.sort_unstable();
        degrees_present.dedup();

        let (color_a, color_b) = lattice.color_partition();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

        let seed = config.seed;
        let _ = n;
        Ok(GibbsEngine {
            lattice,
            dataset,
            config,
            chain,
            streams: Streams::new(seed, chain),
            color_a,
            color_b,
            xtx,
            col_sums,
            sum_w_sq,
            has_w,
            degrees_present,
            pool,
        })
    }

    pub fn chain(&self) -> u64 {
        self.chain
    }

    pub fn streams(&self) -> Streams {
        self.streams
    }

    /// Overdispersed initial state; distinct per (seed, chain).
    pub fn init_state(&self) -> ModelState {
        let m = self.lattice.num_sites();
        let p = self.dataset.design.num_coefficients();
        let n = self.dataset.num_subjects();
        let mut beta_star = vec![0.0; m * p];
        for site in 0..m {
            let mut rng = self.streams.stream(UpdateKind::Init, 0, site as u64, 0);
            for v in &mut beta_star[site * p..(site + 1) * p] {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let alpha_split = if self.config.reparameterize {
            None
        } else {
            let mut rng = self.streams.scalar_stream(UpdateKind::Init, 1);
            Some((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        };
        ModelState {
            m,
            p,
            n,
            beta_star,
            alpha_split,
            gamma: 0.0,
            precision: DMatrix::identity(p, p),
            latent: vec![0.0; m * n],
            iteration: 0,
        }
    }

    /// Redraw every latent from its truncated normal full conditional.
    pub fn update_latents(&self, state: &mut ModelState) {
        let n = state.n;
        let p = state.p;
        let iter = state.iteration;
        let gamma = state.gamma;
        let design = &self.dataset.design;
        let outcomes = &self.dataset.outcomes;
        let streams = self.streams;
        let alpha = state.alpha_split.clone();
        let beta_star = &state.beta_star;
        let latent = &mut state.latent;
        let dataset = self.dataset;

        self.pool.install(|| {
            latent.par_chunks_mut(n).enumerate().for_each_init(
                || vec![0.0; n],
                |eta, (site, z_row)| {
                    let base = dataset.w(site) * gamma;
                    eta.iter_mut().for_each(|e| *e = base);
                    for pp in 0..p {
                        let mut coef = beta_star[site * p + pp];
                        if let Some(a) = &alpha {
                            coef += a[pp];
                        }
                        if coef != 0.0 {
                            let col = design.column(pp);
                            for (e, x) in eta.iter_mut().zip(col) {
                                *e += coef * x;
                            }
                        }
                    }
                    let words = outcomes.row_words(site);
                    for (i, (z, &e)) in z_row.iter_mut().zip(eta.iter()).enumerate() {
                        let y = words[i / 64] >> (i % 64) & 1 == 1;
                        let mut rng =
                            streams.stream(UpdateKind::Latent, iter, site as u64, i as u64);
                        *z = sample_truncated_normal(e, y, &mut rng);
                    }
                },
            );
        });
    }

    fn build_degree_factors(&self, precision: &DMatrix<f64>) -> Result<Vec<Option<DegreeChol>>> {
        let max_deg = *self.degrees_present.last().unwrap_or(&0);
        let mut cache: Vec<Option<DegreeChol>> = (0..=max_deg).map(|_| None).collect();
        for &d in &self.degrees_present {
            let lambda = &self.xtx + precision * d as f64;
            let chol = Cholesky::new(lambda).ok_or_else(|| {
                Error::Numerical(format!(
                    "site update covariance singular at degree {d}; prune isolated mask sites \
                     or drop collinear design columns"
                ))
            })?;
            cache[d] = Some(DegreeChol { l: chol.l() });
        }
        Ok(cache)
    }

    /// Conditional draw for one site given the rest of the current state.
    /// The sweep uses exactly this computation; it is exposed for tests and
    /// small-problem oracles.
    pub fn sample_site_coefficient(&self, state: &ModelState, site: usize) -> Result<Vec<f64>> {
        let factors = self.build_degree_factors(&state.precision)?;
        let shared = SharedCoeffs {
            ptr: state.beta_star.as_ptr() as *mut f64,
            len: state.beta_star.len(),
            _marker: PhantomData,
        };
        let mut scratch = SiteScratch::new(state.p);
        let alpha_term = self.split_alpha_term(state);
        // SAFETY: read-only use; no writes happen through `shared` here.
        let out = unsafe {
            self.site_draw(
                state,
                site,
                &shared,
                &factors,
                alpha_term.as_ref(),
                &mut scratch,
                false,
            )
        };
        Ok(out)
    }

    /// X'X alpha, the extra residual term of the split parameterization.
    fn split_alpha_term(&self, state: &ModelState) -> Option<DVector<f64>> {
        state.alpha_split.as_ref().map(|a| &self.xtx * DVector::from_column_slice(a))
    }

    /// Compute the conditional draw for `site`; writes it back when `commit`.
    ///
    /// SAFETY: caller must guarantee that no site written concurrently is
    /// read here, which the two-color schedule provides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn site_draw(
        &self,
        state: &ModelState,
        site: usize,
        shared: &SharedCoeffs,
        factors: &[Option<DegreeChol>],
        alpha_term: Option<&DVector<f64>>,
        scratch: &mut SiteScratch,
        commit: bool,
    ) -> Vec<f64> {
        let p = state.p;
        let n = state.n;
        let design = &self.dataset.design;
        let z_row = &state.latent[site * n..(site + 1) * n];
        let w_g = self.dataset.w(site) * state.gamma;

        for pp in 0..p {
            let col = design.column(pp);
            scratch.b[pp] = dot(col, z_row) - w_g * self.col_sums[pp];
        }
        if let Some(at) = alpha_term {
            scratch.b -= at;
        }

        let degree = self.lattice.degree(site);
        if degree > 0 {
            scratch.nbr_sum.fill(0.0);
            for &r in self.lattice.neighbors(site) {
                let base = r as usize * p;
                for pp in 0..p {
                    scratch.nbr_sum[pp] += shared.read(base + pp);
                }
            }
            scratch.b.gemv(1.0, &state.precision, &scratch.nbr_sum, 1.0);
        }

        let l = &factors[degree].as_ref().expect("factor cached for every present degree").l;
        l.solve_lower_triangular_mut(&mut scratch.b);
        l.tr_solve_lower_triangular_mut(&mut scratch.b);

        let mut rng = self.streams.stream(UpdateKind::Coefficient, state.iteration, site as u64, 0);
        for pp in 0..p {
            scratch.noise[pp] = rng.sample::<f64, _>(StandardNormal);
        }
        l.tr_solve_lower_triangular_mut(&mut scratch.noise);

        let mut out = Vec::with_capacity(p);
        for pp in 0..p {
            let v = scratch.b[pp] + scratch.noise[pp];
            out.push(v);
            if commit {
                shared.write(site * p + pp, v);
            }
        }
        out
    }

    /// Two-phase checkerboard sweep: all of one color in parallel given the
    /// other, then the reverse. Distributionally identical to any sequential
    /// scan respecting the phase schedule.
    pub fn sweep_coefficients(&self, state: &mut ModelState) -> Result<()> {
        let factors = self.build_degree_factors(&state.precision)?;
        let alpha_term = self.split_alpha_term(state);
        let p = state.p;
        let phases: [&[u32]; 2] = if self.config.swap_phases {
            [&self.color_b, &self.color_a]
        } else {
            [&self.color_a, &self.color_b]
        };

        // Split borrows: the coefficient field is written through the shared
        // handle while the rest of the state is read.
        let mut beta = std::mem::take(&mut state.beta_star);
        let shared = SharedCoeffs::new(&mut beta);
        self.pool.install(|| {
            for phase in phases {
                phase.par_iter().for_each_init(
                    || SiteScratch::new(p),
                    |scratch, &site| {
                        // SAFETY: sites within a phase are pairwise
                        // non-adjacent, so every read targets the other
                        // color and every write slot is unique.
                        unsafe {
                            self.site_draw(
                                state,
                                site as usize,
                                &shared,
                                &factors,
                                alpha_term.as_ref(),
                                scratch,
                                true,
                            );
                        }
                    },
                );
            }
        });
        state.beta_star = beta;

        if state.alpha_split.is_some() {
            self.update_split_alpha(state);
        }
        Ok(())
    }

    /// Fixed-effect update of the split debug parameterization:
    /// alpha | rest ~ MVN((M X'X)^-1 X' sum_j resid_j, (M X'X)^-1).
    fn update_split_alpha(&self, state: &mut ModelState) {
        let p = state.p;
        let n = state.n;
        let m = state.m;
        let design = &self.dataset.design;

        let mut b = DVector::zeros(p);
        let mut beta_col_sum = DVector::zeros(p);
        let mut w_total = 0.0;
        for site in 0..m {
            let z_row = &state.latent[site * n..(site + 1) * n];
            for pp in 0..p {
                b[pp] += dot(design.column(pp), z_row);
                beta_col_sum[pp] += state.beta_star[site * p + pp];
            }
            w_total += self.dataset.w(site);
        }
        b -= &self.xtx * &beta_col_sum;
        for pp in 0..p {
            b[pp] -= state.gamma * w_total * self.col_sums[pp];
        }

        let lambda = &self.xtx * m as f64;
        let chol = Cholesky::new(lambda).expect("X'X positive definite");
        let l = chol.l();
        l.solve_lower_triangular_mut(&mut b);
        l.tr_solve_lower_triangular_mut(&mut b);

        let mut rng = self.streams.scalar_stream(UpdateKind::Coefficient, state.iteration);
        let mut noise = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        l.tr_solve_lower_triangular_mut(&mut noise);
        let alpha = state.alpha_split.as_mut().expect("split mode");
        for pp in 0..p {
            alpha[pp] = b[pp] + noise[pp];
        }
    }

    /// Conjugate normal update of gamma under its flat prior; pinned at 0
    /// when no spatial covariate is attached (or it is identically zero).
    pub fn update_gamma(&self, state: &mut ModelState) {
        if !self.has_w || self.sum_w_sq == 0.0 {
            state.gamma = 0.0;
            return;
        }
        let n = state.n;
        let p = state.p;
        let m = state.m;
        let alpha_dot_cols: f64 = match &state.alpha_split {
            Some(alpha) => alpha.iter().zip(&self.col_sums).map(|(a, c)| a * c).sum(),
            None => 0.0,
        };

        let latent = &state.latent;
        let beta_star = &state.beta_star;
        let col_sums = &self.col_sums;
        let dataset = self.dataset;
        let partials: Vec<f64> = self.pool.install(|| {
            (0..m)
                .into_par_iter()
                .map(|site| {
                    let w = dataset.w(site);
                    if w == 0.0 {
                        return 0.0;
                    }
                    let z_row = &latent[site * n..(site + 1) * n];
                    let z_sum: f64 = z_row.iter().sum();
                    let mut xb = alpha_dot_cols;
                    for pp in 0..p {
                        xb += col_sums[pp] * beta_star[site * p + pp];
                    }
                    w * (z_sum - xb)
                })
                .collect()
        });
        let total: f64 = partials.iter().sum();

        let variance = 1.0 / (n as f64 * self.sum_w_sq);
        let mean = variance * total;
        let mut rng = self.streams.scalar_stream(UpdateKind::Gamma, state.iteration);
        state.gamma = mean + variance.sqrt() * rng.sample::<f64, _>(StandardNormal);
    }

    /// Wishart update of the prior precision:
    /// P | rest ~ Wishart(nu + M - c, (I + S)^-1) with S the sum of
    /// coefficient-difference outer products over neighbor pairs.
    ///
    /// On a lattice with no neighbor pairs the prior never enters any other
    /// conditional, so the update is skipped and the precision stays fixed.
    pub fn update_precision(&self, state: &mut ModelState) -> Result<()> {
        if self.lattice.num_edges() == 0 {
            return Ok(());
        }
        let p = state.p;
        let m = state.m;
        let c = self.lattice.num_components();
        let df = self.config.wishart_df + (m - c) as f64;
        if df <= (p - 1) as f64 {
            return numerical_err(format!(
                "wishart df = nu + M - c = {df} is at most P - 1 = {}; \
                 lattice too small for improper prior; increase nu",
                p - 1
            ));
        }

        let mut s = DMatrix::zeros(p, p);
        let mut d = vec![0.0; p];
        for site in 0..m {
            let base_j = site * p;
            for &r in self.lattice.neighbors(site) {
                let r = r as usize;
                if r <= site {
                    continue; // each unordered pair once
                }
                let base_r = r * p;
                for pp in 0..p {
                    d[pp] = state.beta_star[base_j + pp] - state.beta_star[base_r + pp];
                }
                for a in 0..p {
                    for b in a..p {
                        s[(a, b)] += d[a] * d[b];
                    }
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                s[(a, b)] = s[(b, a)];
            }
        }

        let scale_inv = DMatrix::identity(p, p) + s;
        let chol = Cholesky::new(scale_inv)
            .ok_or_else(|| Error::Numerical("I + S not positive definite".into()))?;
        let scale = chol.inverse();
        let mut rng = self.streams.scalar_stream(UpdateKind::Precision, state.iteration);
        state.precision = wishart::sample_wishart(df, &scale, &mut rng)?;
        Ok(())
    }

    /// One full Gibbs iteration.
    pub fn step(&self, state: &mut ModelState) -> Result<()> {
        state.iteration += 1;
        self.update_latents(state);
        self.sweep_coefficients(state)?;
        self.update_gamma(state);
        self.update_precision(state)
    }

    /// Run the chain from `state.iteration` to `config.iterations`, feeding
    /// the sinks after burn-in and thinning.
    pub fn run(
        &self,
        state: &mut ModelState,
        sinks: &mut RunSinks,
        hook: Option<IterationHook>,
    ) -> Result<()> {
        let mut scratch = Vec::new();
        while state.iteration < self.config.iterations {
            self.step(state)?;
            if self.config.is_retained(state.iteration) {
                self.pool.install(|| sinks.accumulate(self.dataset, state, &mut scratch));
            }
            if let Some((every, f)) = &hook {
                if *every > 0 && state.iteration.is_multiple_of(*every) {
                    f(state, sinks)?;
                }
            }
            if let Some(every) = self.config.log_every {
                if state.iteration.is_multiple_of(every) {
                    eprintln!(
                        "chain {}: iteration {}/{}",
                        self.chain, state.iteration, self.config.iterations
                    );
                }
            }
        }
        Ok(())
    }
}
