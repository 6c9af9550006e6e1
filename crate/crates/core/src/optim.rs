//! Derivative-free bound-constrained minimization.
//!
//! The method maintains a full quadratic interpolation model over
//! `(n+1)(n+2)/2` sample points and takes trust-region steps on that model
//! (Steihaug conjugate gradients for the ball, projection for the box).
//! When the model goes stationary at the current resolution, the sample set
//! is rebuilt around the incumbent at half the radius; the run converges
//! when the radius drops below `final_radius`. No gradients of the objective
//! are ever requested, and the whole procedure is deterministic.

use crate::linalg;
use crate::num::Real;

/// Options for [`minimize`].
#[derive(Debug, Clone)]
pub struct TrustRegionOptions<F> {
    /// Initial trust-region radius and stencil spacing.
    pub initial_radius: F,
    /// Convergence resolution: the run stops once the radius falls below it.
    pub final_radius: F,
    /// Hard cap on objective evaluations.
    pub max_evals: usize,
    /// Per-dimension lower bounds; empty means unbounded.
    pub lower: Vec<F>,
    /// Per-dimension upper bounds; empty means unbounded.
    pub upper: Vec<F>,
}

impl<F: Real> Default for TrustRegionOptions<F> {
    fn default() -> Self {
        Self {
            initial_radius: F::of(0.5),
            final_radius: F::of(1e-8),
            max_evals: 4000,
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }
}

/// Result of a minimization run.
#[derive(Debug, Clone)]
pub struct Minimum<F> {
    pub point: Vec<F>,
    pub value: F,
    pub evals: usize,
    /// True when the radius reached `final_radius` before the eval budget ran
    /// out.
    pub converged: bool,
}

struct Workspace<'a, F, O>
where
    O: FnMut(&[F]) -> F,
{
    f: O,
    opts: &'a TrustRegionOptions<F>,
    n: usize,
    evals: usize,
    points: Vec<Vec<F>>,
    values: Vec<F>,
    best: usize,
    /// Size of the freshly built stencil prefix of `points`; accepted steps
    /// beyond it cycle through a small ring so the stencil keeps dominating
    /// the model fit.
    stencil_len: usize,
    extra_cursor: usize,
}

impl<'a, F: Real, O: FnMut(&[F]) -> F> Workspace<'a, F, O> {
    fn clamp(&self, x: &mut [F]) {
        for i in 0..self.n {
            if let Some(lo) = self.opts.lower.get(i) {
                if x[i] < *lo {
                    x[i] = *lo;
                }
            }
            if let Some(hi) = self.opts.upper.get(i) {
                if x[i] > *hi {
                    x[i] = *hi;
                }
            }
        }
    }

    fn eval(&mut self, x: &[F]) -> F {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            // Keep the model finite; a huge value still signals "bad region".
            let base = if self.values.is_empty() {
                F::zero()
            } else {
                self.values[self.best]
            };
            base.abs() + F::of(1e8)
        }
    }

    fn budget_left(&self) -> bool {
        self.evals < self.opts.max_evals
    }

    /// Distinct sample point near `base` offset along dims `i` (and `j`) by
    /// `delta`, kept inside the box.
    fn stencil_point(&self, base: &[F], i: usize, j: Option<usize>, delta: F) -> Vec<F> {
        let mut p = base.to_vec();
        for &dim in [Some(i), j].iter().flatten() {
            let lo = self.opts.lower.get(dim).copied();
            let hi = self.opts.upper.get(dim).copied();
            let inside =
                |v: F| lo.map_or(true, |l| v >= l) && hi.map_or(true, |h| v <= h);
            let up = p[dim] + delta;
            p[dim] = if inside(up) {
                up
            } else {
                let down = p[dim] - delta;
                if inside(down) {
                    down
                } else {
                    // Degenerately narrow box: stay at the midpoint.
                    let l = lo.unwrap_or(p[dim]);
                    let h = hi.unwrap_or(p[dim]);
                    (l + h) * F::of(0.5)
                }
            };
        }
        p
    }

    /// Rebuild the full interpolation set around the incumbent. When a
    /// stencil point collapses onto an existing one (incumbent at a bound),
    /// a doubled one-sided offset keeps the set fully determined.
    fn refresh(&mut self, spacing: F) {
        let base = self.points[self.best].clone();
        let base_val = self.values[self.best];
        let mut points = vec![base.clone()];
        let mut values = vec![base_val];
        let mut push_new = |work: &mut Self, candidates: &[Vec<F>]| {
            for p in candidates {
                if points.iter().any(|q| q == p) {
                    continue;
                }
                if !work.budget_left() {
                    return;
                }
                let v = work.eval(p);
                points.push(p.clone());
                values.push(v);
                return;
            }
        };
        for i in 0..self.n {
            for &sign in &[F::one(), -F::one()] {
                let primary = self.stencil_point(&base, i, None, spacing * sign);
                let fallback = self.stencil_point(&base, i, None, spacing * sign * F::of(2.0));
                push_new(self, &[primary, fallback]);
            }
        }
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let primary = self.stencil_point(&base, i, Some(j), spacing);
                let fallback =
                    self.stencil_point(&base, i, Some(j), spacing * F::of(2.0));
                push_new(self, &[primary, fallback]);
            }
        }
        self.points = points;
        self.values = values;
        self.best = argmin(&self.values);
        self.stencil_len = self.points.len();
        self.extra_cursor = 0;
    }

    /// Record an accepted step without letting the sample set grow past the
    /// stencil plus a few extras.
    fn insert_extra(&mut self, point: Vec<F>, value: F) {
        const MAX_EXTRA: usize = 4;
        let idx = if self.points.len() < self.stencil_len + MAX_EXTRA {
            self.points.push(point);
            self.values.push(value);
            self.points.len() - 1
        } else {
            let mut slot = self.stencil_len + (self.extra_cursor % MAX_EXTRA);
            self.extra_cursor += 1;
            if slot == self.best {
                slot = self.stencil_len + (self.extra_cursor % MAX_EXTRA);
                self.extra_cursor += 1;
            }
            self.points[slot] = point;
            self.values[slot] = value;
            slot
        };
        if value < self.values[self.best] {
            self.best = idx;
        }
    }

    /// Least-squares quadratic model around the incumbent, scaled by the
    /// sample set's actual spread. Returns `(gradient, hessian)` in unscaled
    /// space, or `None` when the set is degenerate (near-duplicate points,
    /// too few points, non-finite solve).
    fn fit_model(&self) -> Option<(Vec<F>, Vec<F>)> {
        let n = self.n;
        let k = 1 + n + n * (n + 1) / 2;
        let m = self.points.len();
        // The ridge keeps the normal equations solvable even short of a full
        // quadratic set (incumbent pinned at bounds), at reduced model
        // quality.
        if m < n + 2 {
            return None;
        }
        let base = &self.points[self.best];
        let dist2 = |a: &[F], b: &[F]| -> F {
            a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
        };
        let mut spread2 = F::zero();
        for p in &self.points {
            let d = dist2(p, base);
            if d > spread2 {
                spread2 = d;
            }
        }
        if !(spread2 > F::zero()) {
            return None;
        }
        let scale = spread2.sqrt();
        // Near-duplicate points make the design numerically rank-deficient.
        let dup2 = spread2 * F::of(1e-20);
        for i in 0..m {
            for j in (i + 1)..m {
                if dist2(&self.points[i], &self.points[j]) <= dup2 {
                    return None;
                }
            }
        }

        let mut design = vec![F::zero(); m * k];
        let mut rhs = vec![F::zero(); m];
        for (row, (p, &v)) in self.points.iter().zip(self.values.iter()).enumerate() {
            let t: Vec<F> = (0..n).map(|d| (p[d] - base[d]) / scale).collect();
            let mut col = 0;
            design[row * k + col] = F::one();
            col += 1;
            for d in 0..n {
                design[row * k + col] = t[d];
                col += 1;
            }
            for d in 0..n {
                design[row * k + col] = t[d] * t[d] * F::of(0.5);
                col += 1;
            }
            for a in 0..n {
                for b in (a + 1)..n {
                    design[row * k + col] = t[a] * t[b];
                    col += 1;
                }
            }
            debug_assert_eq!(col, k);
            rhs[row] = v - self.values[self.best];
        }
        // Normal equations with a relative ridge for poise safety.
        let mut ata = vec![F::zero(); k * k];
        let mut atb = vec![F::zero(); k];
        for row in 0..m {
            for a in 0..k {
                let da = design[row * k + a];
                atb[a] = atb[a] + da * rhs[row];
                for b in 0..k {
                    ata[a * k + b] = ata[a * k + b] + da * design[row * k + b];
                }
            }
        }
        let trace: F = (0..k).map(|d| ata[d * k + d]).sum();
        let ridge = (trace / F::of(k as f64) + F::one()) * F::of(1e-8);
        for d in 0..k {
            ata[d * k + d] = ata[d * k + d] + ridge;
        }
        let mut coef = atb;
        if !linalg::solve_in_place(&mut ata, &mut coef, k) {
            return None;
        }
        if !coef.iter().all(|c| c.is_finite()) {
            return None;
        }
        let mut grad = vec![F::zero(); n];
        let mut hess = vec![F::zero(); n * n];
        let mut col = 1;
        for d in 0..n {
            grad[d] = coef[col] / scale;
            col += 1;
        }
        let scale2 = scale * scale;
        for d in 0..n {
            hess[d * n + d] = coef[col] / scale2;
            col += 1;
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let v = coef[col] / scale2;
                hess[a * n + b] = v;
                hess[b * n + a] = v;
                col += 1;
            }
        }
        Some((grad, hess))
    }

    /// Model value of step `s`: `g's + s'Hs/2`.
    fn model_value(grad: &[F], hess: &[F], s: &[F]) -> F {
        let n = grad.len();
        let mut v = F::zero();
        for i in 0..n {
            v = v + grad[i] * s[i];
            let mut hs = F::zero();
            for j in 0..n {
                hs = hs + hess[i * n + j] * s[j];
            }
            v = v + s[i] * hs * F::of(0.5);
        }
        v
    }

    /// Candidate step inside ball and box, chosen as the better of the
    /// projected Steihaug step and the projected Cauchy step.
    fn trust_step(&self, grad: &[F], hess: &[F], radius: F) -> Vec<F> {
        let base = &self.points[self.best];
        let project = |s: &[F]| -> Vec<F> {
            let mut x: Vec<F> = base.iter().zip(s).map(|(&b, &si)| b + si).collect();
            self.clamp(&mut x);
            x.iter().zip(base).map(|(&xi, &bi)| xi - bi).collect()
        };

        let cg = steihaug(grad, hess, radius);
        let cg = project(&cg);

        // Projected steepest-descent (Cauchy) fallback.
        let n = self.n;
        let mut d: Vec<F> = grad.iter().map(|&g| -g).collect();
        for i in 0..n {
            // Zero out descent components that immediately leave the box.
            let at_lower = self
                .opts
                .lower
                .get(i)
                .map_or(false, |&lo| base[i] <= lo && d[i] < F::zero());
            let at_upper = self
                .opts
                .upper
                .get(i)
                .map_or(false, |&hi| base[i] >= hi && d[i] > F::zero());
            if at_lower || at_upper {
                d[i] = F::zero();
            }
        }
        let dnorm = norm(&d);
        let cauchy = if dnorm > F::zero() {
            let mut dhd = F::zero();
            for i in 0..n {
                let mut hd = F::zero();
                for j in 0..n {
                    hd = hd + hess[i * n + j] * d[j];
                }
                dhd = dhd + d[i] * hd;
            }
            let gd: F = grad.iter().zip(&d).map(|(&g, &di)| g * di).sum();
            let t_ball = radius / dnorm;
            let t = if dhd > F::zero() {
                let t_model = -gd / dhd;
                if t_model < t_ball {
                    t_model
                } else {
                    t_ball
                }
            } else {
                t_ball
            };
            let s: Vec<F> = d.iter().map(|&di| di * t).collect();
            project(&s)
        } else {
            vec![F::zero(); n]
        };

        let mv_cg = Self::model_value(grad, hess, &cg);
        let mv_cauchy = Self::model_value(grad, hess, &cauchy);
        if mv_cg <= mv_cauchy {
            cg
        } else {
            cauchy
        }
    }
}

fn argmin<F: Real>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn norm<F: Real>(v: &[F]) -> F {
    v.iter().map(|&x| x * x).sum::<F>().sqrt()
}

/// Steihaug-Toint truncated conjugate gradients for `min g's + s'Hs/2`,
/// `||s|| <= radius`. Handles indefinite `H` by stepping to the boundary.
fn steihaug<F: Real>(grad: &[F], hess: &[F], radius: F) -> Vec<F> {
    let n = grad.len();
    let mut s = vec![F::zero(); n];
    let mut r: Vec<F> = grad.iter().map(|&g| -g).collect();
    let mut d = r.clone();
    let gnorm = norm(&r);
    if gnorm == F::zero() {
        return s;
    }
    let tol = gnorm * F::of(1e-12);
    let to_boundary = |s: &[F], d: &[F]| -> F {
        // positive tau with ||s + tau d|| = radius
        let ss: F = s.iter().map(|&x| x * x).sum();
        let sd: F = s.iter().zip(d).map(|(&a, &b)| a * b).sum();
        let dd: F = d.iter().map(|&x| x * x).sum();
        if dd == F::zero() {
            return F::zero();
        }
        let disc = (sd * sd + dd * (radius * radius - ss)).max(F::zero());
        (-sd + disc.sqrt()) / dd
    };
    for _ in 0..(4 * n + 8) {
        let mut hd = vec![F::zero(); n];
        for i in 0..n {
            let mut acc = F::zero();
            for j in 0..n {
                acc = acc + hess[i * n + j] * d[j];
            }
            hd[i] = acc;
        }
        let dhd: F = d.iter().zip(&hd).map(|(&a, &b)| a * b).sum();
        let rr: F = r.iter().map(|&x| x * x).sum();
        if dhd <= F::zero() {
            let tau = to_boundary(&s, &d);
            for i in 0..n {
                s[i] = s[i] + d[i] * tau;
            }
            return s;
        }
        let alpha = rr / dhd;
        let mut s_next = s.clone();
        for i in 0..n {
            s_next[i] = s_next[i] + d[i] * alpha;
        }
        if norm(&s_next) >= radius {
            let tau = to_boundary(&s, &d);
            for i in 0..n {
                s[i] = s[i] + d[i] * tau;
            }
            return s;
        }
        s = s_next;
        let mut r_next = r.clone();
        for i in 0..n {
            r_next[i] = r_next[i] - hd[i] * alpha;
        }
        let rr_next: F = r_next.iter().map(|&x| x * x).sum();
        if rr_next.sqrt() < tol {
            return s;
        }
        let beta = rr_next / rr;
        for i in 0..n {
            d[i] = r_next[i] + d[i] * beta;
        }
        r = r_next;
    }
    s
}

/// Minimize `f` from `x0` under the given options.
pub fn minimize<F, O>(f: O, x0: &[F], opts: &TrustRegionOptions<F>) -> Minimum<F>
where
    F: Real,
    O: FnMut(&[F]) -> F,
{
    let n = x0.len();
    assert!(n > 0, "empty parameter vector");
    assert!(
        opts.lower.is_empty() || opts.lower.len() == n,
        "lower bounds dimension mismatch"
    );
    assert!(
        opts.upper.is_empty() || opts.upper.len() == n,
        "upper bounds dimension mismatch"
    );

    let mut work = Workspace {
        f,
        opts,
        n,
        evals: 0,
        points: Vec::new(),
        values: Vec::new(),
        best: 0,
        stencil_len: 0,
        extra_cursor: 0,
    };

    let mut start = x0.to_vec();
    work.clamp(&mut start);
    let v0 = work.eval(&start);
    work.points.push(start);
    work.values.push(v0);

    // The interpolation stencil is rebuilt whenever the incumbent wanders
    // more than a few spacings from where the stencil was built or the
    // spacing changes, so every model is fit on well-poised geometry (the
    // set stays a fresh orthogonal stencil plus at most a few accepted
    // steps). Spacing halves when the model goes stationary or a step
    // fails, and grows on confident full-length steps.
    let mut spacing = opts.initial_radius;
    let mut anchor: Option<(Vec<F>, F)> = None;
    let mut converged = false;
    let dist2 = |a: &[F], b: &[F]| -> F {
        a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
    };

    while work.budget_left() {
        if spacing < opts.final_radius {
            converged = true;
            break;
        }
        let anchored = anchor.as_ref().map_or(false, |(c, s)| {
            *s == spacing
                && dist2(c, &work.points[work.best])
                    <= spacing * spacing * F::of(9.0)
        });
        if !anchored {
            let base = work.points[work.best].clone();
            work.refresh(spacing);
            anchor = Some((base, spacing));
        }

        let (grad, hess) = match work.fit_model() {
            Some(m) => m,
            None => {
                spacing = spacing * F::of(0.5);
                anchor = None;
                continue;
            }
        };
        let radius = spacing * F::of(2.0);
        let step = work.trust_step(&grad, &hess, radius);
        let pred = -Workspace::<F, O>::model_value(&grad, &hess, &step);
        let step_norm = norm(&step);
        let f_best = work.values[work.best];
        let tiny = (F::one() + f_best.abs()) * F::of(1e-15);
        // Opt-in iteration tracing for debugging convergence behavior.
        static TRACE: std::sync::OnceLock<bool> = std::sync::OnceLock::new();
        if *TRACE.get_or_init(|| std::env::var("CITEPREF_OPTIM_TRACE").is_ok()) {
            eprintln!(
                "evals={} spacing={:.3e} pred={:.3e} step_norm={:.3e} f_best={:?} grad_norm={:.3e} step={:?} best={:?}",
                work.evals,
                spacing.to_f64().unwrap_or(f64::NAN),
                pred.to_f64().unwrap_or(f64::NAN),
                step_norm.to_f64().unwrap_or(f64::NAN),
                f_best,
                norm(&grad).to_f64().unwrap_or(f64::NAN),
                step,
                work.points[work.best],
            );
        }

        if pred <= tiny || step_norm < spacing * F::of(1e-10) {
            // Stationary at this resolution; sharpen.
            spacing = spacing * F::of(0.5);
            anchor = None;
            continue;
        }

        let mut candidate = work.points[work.best].clone();
        for i in 0..n {
            candidate[i] = candidate[i] + step[i];
        }
        work.clamp(&mut candidate);
        if candidate == work.points[work.best] {
            spacing = spacing * F::of(0.5);
            anchor = None;
            continue;
        }
        let f_new = work.eval(&candidate);

        // Decreases below the objective's floating-point noise floor do not
        // count as progress, or the loop crawls forever on noise; the point
        // is still recorded so the incumbent stays honest.
        let noise_floor = (F::one() + f_best.abs()) * F::of(1e-13);
        if f_new < f_best {
            work.insert_extra(candidate, f_new);
        }
        if f_new < f_best - noise_floor {
            let rho = (f_best - f_new) / pred;
            if rho > F::of(0.6) && step_norm > radius * F::of(0.8) {
                spacing = spacing * F::of(2.0);
                anchor = None;
            }
        } else {
            spacing = spacing * F::of(0.5);
            anchor = None;
        }
    }

    Minimum {
        point: work.points[work.best].clone(),
        value: work.values[work.best],
        evals: work.evals,
        converged,
    }
}
