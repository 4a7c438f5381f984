use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;

use super::config::FilterConfig;
use super::detection::{FieldOfView, Normal2};
use super::particles::resample;
use super::{from_fixed, to_fixed, SlamPosterior, StepDiagnostics};
use crate::assoc::{loopy_bp, AssociationProblem};
use crate::error::{Error, Result};
use crate::mixture::{log_sum_exp, moment_match, MixtureRole};
use crate::rfs::{ppp_thin_by_miss, BernoulliComponent, Label, PmbState, PoissonProcess};
use crate::set_factors::{partition_ppp, shift_label, LabeledDensity};

/// Largest existence probability kept, so a missed detection is never impossible.
const MAX_EXISTENCE: f64 = 1.0 - 1e-12;

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn safe_ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Landmark Gaussian with its measurement-update quantities for `z = x - s + r`.
struct LinearizedGaussian {
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
    /// Density of `z + s` under the prediction, `N(·; mean, cov + R)`.
    innovation: Normal2,
    gain: Matrix2<f64>,
    post_cov: Matrix2<f64>,
}

impl LinearizedGaussian {
    fn new(mean: Vector2<f64>, cov: Matrix2<f64>, r: &Matrix2<f64>, time_index: usize) -> Result<Self> {
        let s = cov + r;
        let innovation = Normal2::new(mean, &s).ok_or_else(|| Error::NumericalFailure {
            time_index,
            reason: "singular landmark innovation covariance".into(),
        })?;
        let gain = cov * innovation.inverse;
        let i_k = Matrix2::identity() - gain;
        let post_cov = i_k * cov * i_k.transpose() + gain * r * gain.transpose();
        Ok(Self {
            mean,
            cov,
            innovation,
            gain,
            post_cov: (post_cov + post_cov.transpose()) * 0.5,
        })
    }

    fn posterior_mean(&self, shifted: &Vector2<f64>) -> Vector2<f64> {
        self.mean + self.gain * (shifted - self.mean)
    }
}

/// Running first and second moments of a weighted point cloud.
#[derive(Clone)]
struct Moments {
    weight: f64,
    first: Vector2<f64>,
    second: Matrix2<f64>,
}

impl Moments {
    fn new() -> Self {
        Self {
            weight: 0.0,
            first: Vector2::zeros(),
            second: Matrix2::zeros(),
        }
    }

    fn add(&mut self, w: f64, x: &Vector2<f64>) {
        self.weight += w;
        self.first += x * w;
        self.second += x * x.transpose() * w;
    }

    /// Mean and covariance of the cloud, each point widened by `base_cov`.
    fn gaussian(&self, base_cov: &Matrix2<f64>) -> Option<(Vector2<f64>, Matrix2<f64>)> {
        if !(self.weight > 0.0) {
            return None;
        }
        let mean = self.first / self.weight;
        let spread = self.second / self.weight - mean * mean.transpose();
        Some((mean, base_cov + spread))
    }
}

/// Measurement update of a predicted posterior.
///
/// `bs_measurement`, when given, additionally weights the particles with
/// the direct position measurement of the base-station path.
pub fn update(
    pred: &SlamPosterior,
    measurements: &[Vector2<f64>],
    bs_measurement: Option<&Vector2<f64>>,
    cfg: &FilterConfig,
    rng: &mut impl Rng,
) -> Result<(SlamPosterior, StepDiagnostics)> {
    let time_index = pred.time_index;
    let n_particles = pred.sensor.len();
    if n_particles == 0 {
        return Err(Error::NumericalFailure {
            time_index,
            reason: "empty particle set".into(),
        });
    }
    let n_meas = measurements.len();
    let fov = FieldOfView {
        p_detect: cfg.p_detect,
        radius: cfg.fov_radius,
    };
    let r_cov = Matrix2::identity() * cfg.meas_std.powi(2);
    let positions: Vec<Vector2<f64>> = pred
        .sensor
        .states
        .iter()
        .map(|s| Vector2::new(s[0], s[1]))
        .collect();
    let log_w = &pred.sensor.log_weights;
    let log_clutter = safe_ln(cfg.clutter_intensity);

    // Poisson part: the undetected remainder and one relabeled copy per measurement.
    let copies = partition_ppp(&pred.map.poisson, n_meas + 1)?;
    let mut new_target_intensity = Vec::with_capacity(n_meas);
    for (j, copy) in copies.iter().enumerate().skip(1) {
        let shifted = shift_label(&LabeledDensity::Poisson(copy.clone()), i64::from(pred.last_label) + j as i64)?;
        match shifted {
            LabeledDensity::Poisson(p) => new_target_intensity.push(p),
            LabeledDensity::Bernoulli(_) => unreachable!("a Poisson input stays Poisson"),
        }
    }
    let poisson_components = pred
        .map
        .poisson
        .intensity
        .components
        .iter()
        .map(|c| {
            let (mean, cov) = to_fixed(&c.gaussian);
            Ok((c.log_weight, LinearizedGaussian::new(mean, cov, &r_cov, time_index)?))
        })
        .collect::<Result<Vec<_>>>()?;

    // Previously detected landmarks, each as a single Gaussian.
    let mut landmarks = Vec::with_capacity(pred.map.bernoullis.len());
    for b in &pred.map.bernoullis {
        let g = if b.density.len() == 1 {
            b.density.components[0].gaussian.clone()
        } else {
            b.density.moment_match()?
        };
        let (mean, cov) = to_fixed(&g);
        landmarks.push(LinearizedGaussian::new(mean, cov, &r_cov, time_index)?);
    }

    // Landmarks that no particle can detect keep their prediction.
    let (mut lo, mut hi) = (positions[0], positions[0]);
    for p in &positions {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let narrow = |cov: &Matrix2<f64>| cov.trace().sqrt() <= 0.05 * cfg.fov_radius;
    let relevant: Vec<usize> = (0..landmarks.len())
        .filter(|&i| {
            let lm = &landmarks[i];
            if cfg.p_detect == 0.0 || pred.map.bernoullis[i].existence == 0.0 {
                return false;
            }
            if !narrow(&lm.cov) {
                return true;
            }
            let nearest = lm.mean.sup(&lo).inf(&hi);
            (lm.mean - nearest).norm() <= cfg.fov_radius
        })
        .collect();
    let n_rel = relevant.len();

    let allowed = gating_mask(cfg, &relevant, &landmarks, measurements, &pred.sensor, &positions);

    // Per-particle evidence.
    let stride = n_meas + 1;
    let mut log_beta_p = vec![f64::NEG_INFINITY; n_particles * n_rel * stride];
    let mut log_new_p = vec![f64::NEG_INFINITY; n_particles * n_meas];
    let mut detected_mass = vec![0.0; n_particles];
    let mut landmark_miss = vec![0.0; n_rel];
    let mut poisson_miss = vec![0.0; poisson_components.len()];
    let mut shifted = vec![Vector2::zeros(); n_meas];
    let mut terms = Vec::with_capacity(poisson_components.len());

    for (p, pos) in positions.iter().enumerate() {
        let w = log_w[p].exp();
        for (j, z) in measurements.iter().enumerate() {
            shifted[j] = z + pos;
        }
        for (ri, &i) in relevant.iter().enumerate() {
            let lm = &landmarks[i];
            let r = pred.map.bernoullis[i].existence;
            let pd = fov.expected(pos, &lm.mean, &lm.cov);
            landmark_miss[ri] += w * (1.0 - pd);
            let base = (p * n_rel + ri) * stride;
            log_beta_p[base] = safe_ln((1.0 - r) + r * (1.0 - pd));
            if pd > 0.0 {
                let log_rpd = (r * pd).ln();
                for j in 0..n_meas {
                    if allowed[ri * n_meas + j] {
                        log_beta_p[base + j + 1] = log_rpd + lm.innovation.log_pdf(&shifted[j]);
                    }
                }
            }
        }
        for (q, (log_eta, comp)) in poisson_components.iter().enumerate() {
            let pd = fov.expected(pos, &comp.mean, &comp.cov);
            detected_mass[p] += log_eta.exp() * pd;
            poisson_miss[q] += w * (1.0 - pd);
        }
        if cfg.p_detect > 0.0 {
            for j in 0..n_meas {
                terms.clear();
                for (log_eta, comp) in &poisson_components {
                    let post_mean = comp.posterior_mean(&shifted[j]);
                    let pd = fov.expected(pos, &post_mean, &comp.post_cov);
                    if pd > 0.0 {
                        terms.push(log_eta + comp.innovation.log_pdf(&shifted[j]) + pd.ln());
                    }
                }
                log_new_p[p * n_meas + j] = log_sum_exp(terms.iter().copied());
            }
        }
    }

    // Particle-averaged association weights.
    let mut log_beta = DMatrix::from_element(n_rel, stride, f64::NEG_INFINITY);
    for (ri, &i) in relevant.iter().enumerate() {
        let r = pred.map.bernoullis[i].existence;
        log_beta[(ri, 0)] = safe_ln((1.0 - r) + r * landmark_miss[ri].clamp(0.0, 1.0));
        for j in 0..n_meas {
            log_beta[(ri, j + 1)] = log_sum_exp(
                (0..n_particles).map(|p| log_w[p] + log_beta_p[(p * n_rel + ri) * stride + j + 1]),
            );
        }
    }
    let log_new: Vec<f64> = (0..n_meas)
        .map(|j| log_sum_exp((0..n_particles).map(|p| log_w[p] + log_new_p[p * n_meas + j])))
        .collect();
    let log_weight_new: Vec<f64> = log_new.iter().map(|&e| log_add(log_clutter, e)).collect();

    // Column scales per measurement, then row scales per landmark.
    let col_scale: Vec<f64> = (0..n_meas)
        .map(|j| {
            let m = (0..n_rel)
                .map(|ri| log_beta[(ri, j + 1)])
                .fold(log_weight_new[j], f64::max);
            if m.is_finite() {
                m
            } else {
                0.0
            }
        })
        .collect();
    let row_scale: Vec<f64> = (0..n_rel)
        .map(|ri| {
            let m = (0..n_meas)
                .map(|j| log_beta[(ri, j + 1)] - col_scale[j])
                .fold(log_beta[(ri, 0)], f64::max);
            if m.is_finite() {
                m
            } else {
                0.0
            }
        })
        .collect();
    let beta = DMatrix::from_fn(n_rel, stride, |ri, c| {
        let col = if c == 0 { 0.0 } else { col_scale[c - 1] };
        (log_beta[(ri, c)] - col - row_scale[ri]).exp()
    });
    let new_weight: Vec<f64> = (0..n_meas)
        .map(|j| (log_weight_new[j] - col_scale[j]).exp())
        .collect();
    let problem = AssociationProblem::new(beta, new_weight).map_err(|e| match e {
        Error::DegenerateEvidence { target } => Error::DegenerateEvidence {
            target: relevant[target],
        },
        other => other,
    })?;
    let lbp = loopy_bp(&problem, &cfg.lbp)?;

    // Previously detected landmarks.
    let mut bernoullis: Vec<BernoulliComponent> = pred.map.bernoullis.clone();
    for (ri, &i) in relevant.iter().enumerate() {
        let lm = &landmarks[i];
        let prior = &pred.map.bernoullis[i];
        let row = lbp.marginals.target.row(ri);
        let beta_miss = log_beta[(ri, 0)].exp();
        let miss_weight = if beta_miss > 0.0 {
            row[0] * prior.existence * landmark_miss[ri].clamp(0.0, 1.0) / beta_miss
        } else {
            0.0
        };
        let mut parts = vec![(safe_ln(miss_weight), from_fixed(&lm.mean, &lm.cov))];
        for j in 0..n_meas {
            if row[j + 1] <= 0.0 {
                continue;
            }
            let shift = log_beta[(ri, j + 1)];
            let mut moments = Moments::new();
            for (p, pos) in positions.iter().enumerate() {
                let lb = log_beta_p[(p * n_rel + ri) * stride + j + 1];
                if lb == f64::NEG_INFINITY {
                    continue;
                }
                let weight = (log_w[p] + lb - shift).exp();
                moments.add(weight, &lm.posterior_mean(&(measurements[j] + pos)));
            }
            if let Some((mean, cov)) = moments.gaussian(&lm.post_cov) {
                parts.push((row[j + 1].ln(), from_fixed(&mean, &cov)));
            }
        }
        let existence = (miss_weight + (1.0 - row[0])).clamp(0.0, MAX_EXISTENCE);
        let density = moment_match(parts.iter().map(|(w, g)| (*w, g)))?;
        bernoullis[i] = BernoulliComponent::gaussian(existence, density, prior.label)?;
    }

    // Newly detected landmarks, one per measurement.
    for j in 0..n_meas {
        let label = Label(pred.last_label + 1 + j as u32);
        if log_new[j] == f64::NEG_INFINITY {
            continue;
        }
        let existence = lbp.marginals.measurement[(j, 0)] * (log_new[j] - log_weight_new[j]).exp();
        let shift = log_sum_exp((0..n_particles).map(|p| log_w[p] + log_new_p[p * n_meas + j]));
        let intensity = &new_target_intensity[j];
        debug_assert_eq!(intensity.label, label);
        let mut parts: Vec<(f64, Vector2<f64>, usize)> = Vec::new();
        for (p, pos) in positions.iter().enumerate() {
            let shifted = measurements[j] + pos;
            for (q, (log_eta, comp)) in poisson_components.iter().enumerate() {
                let post_mean = comp.posterior_mean(&shifted);
                let pd = fov.expected(pos, &post_mean, &comp.post_cov);
                if pd > 0.0 {
                    let lw = log_w[p] + log_eta + comp.innovation.log_pdf(&shifted) + pd.ln() - shift;
                    parts.push((lw, post_mean, q));
                }
            }
        }
        let mut per_component = vec![Moments::new(); poisson_components.len()];
        for (lw, mean, q) in &parts {
            per_component[*q].add(lw.exp(), mean);
        }
        let gaussians: Vec<(f64, _)> = per_component
            .iter()
            .enumerate()
            .filter_map(|(q, m)| {
                m.gaussian(&poisson_components[q].1.post_cov)
                    .map(|(mean, cov)| (m.weight.ln(), from_fixed(&mean, &cov)))
            })
            .collect();
        if gaussians.is_empty() {
            continue;
        }
        let density = moment_match(gaussians.iter().map(|(w, g)| (*w, g)))?;
        bernoullis.push(BernoulliComponent::gaussian(
            existence.clamp(0.0, MAX_EXISTENCE),
            density,
            label,
        )?);
    }
    bernoullis.retain(|b| b.existence >= cfg.bernoulli_prune_threshold);

    // Undetected landmarks.
    let miss: Vec<f64> = poisson_miss.iter().map(|m| m.clamp(0.0, 1.0)).collect();
    let undetected: PoissonProcess = ppp_thin_by_miss(&copies[0], &miss)?;
    let poisson = PoissonProcess::undetected(
        undetected
            .intensity
            .reduce(&cfg.poisson_reduce, MixtureRole::Intensity)?,
    );

    // Sensor reweighting.
    let sum_to_measurement: Vec<f64> = (0..n_meas)
        .map(|j| lbp.to_measurement.column(j).sum())
        .collect();
    let log_to_target = lbp.to_target.map(safe_ln);
    let bs_normal = bs_measurement
        .map(|z| Normal2::new(*z, &r_cov).expect("positive measurement covariance"));
    let mut sensor = pred.sensor.clone();
    for (p, pos) in positions.iter().enumerate() {
        let mut increment = -detected_mass[p];
        for ri in 0..n_rel {
            let base = (p * n_rel + ri) * stride;
            let mut acc = log_beta_p[base] - row_scale[ri];
            for j in 0..n_meas {
                let lb = log_beta_p[base + j + 1];
                if lb > f64::NEG_INFINITY {
                    acc = log_add(acc, log_to_target[(ri, j)] + lb - col_scale[j] - row_scale[ri]);
                }
            }
            increment += acc;
        }
        if cfg.use_new_target_sensor_messages {
            for j in 0..n_meas {
                let local = log_add(log_clutter, log_new_p[p * n_meas + j]) - col_scale[j];
                increment += log_add(local, safe_ln(sum_to_measurement[j]));
            }
        }
        if let Some(normal) = &bs_normal {
            increment += normal.log_pdf(pos);
        }
        sensor.log_weights[p] += increment;
    }
    sensor.normalize(time_index)?;
    let ess = sensor.effective_sample_size();
    let resampled = ess < cfg.ess_fraction * n_particles as f64;
    if resampled {
        sensor = resample(&sensor, rng).map_err(|e| match e {
            Error::NumericalFailure { reason, .. } => Error::NumericalFailure { time_index, reason },
            other => other,
        })?;
    }

    let diagnostics = StepDiagnostics {
        ess,
        resampled,
        n_bernoulli: bernoullis.len(),
        ppp_mass: poisson.mass(),
        assoc_iterations: lbp.iterations,
        assoc_converged: lbp.converged,
    };
    Ok((
        SlamPosterior {
            sensor,
            map: PmbState {
                poisson,
                bernoullis,
            },
            time_index,
            last_label: pred.last_label + n_meas as u32,
        },
        diagnostics,
    ))
}

/// Which landmark-measurement pairs pass the optional gate.
fn gating_mask(
    cfg: &FilterConfig,
    relevant: &[usize],
    landmarks: &[LinearizedGaussian],
    measurements: &[Vector2<f64>],
    sensor: &super::ParticleBelief,
    positions: &[Vector2<f64>],
) -> Vec<bool> {
    let n_meas = measurements.len();
    let Some(gate) = cfg.gate else {
        return vec![true; relevant.len() * n_meas];
    };
    let mean = sensor.mean_position();
    let mut spread = Matrix2::zeros();
    for (p, pos) in positions.iter().enumerate() {
        let d = pos - mean;
        spread += d * d.transpose() * sensor.log_weights[p].exp();
    }
    let mut mask = Vec::with_capacity(relevant.len() * n_meas);
    for &i in relevant {
        let lm = &landmarks[i];
        let s = lm.cov + Matrix2::identity() * cfg.meas_std.powi(2) + spread;
        let inverse = s.try_inverse().unwrap_or_else(Matrix2::zeros);
        for z in measurements {
            let d = z + mean - lm.mean;
            mask.push(d.dot(&(inverse * d)) <= gate);
        }
    }
    mask
}
