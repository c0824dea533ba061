//! The canned experiments. Each one computes its rows in parallel over
//! independent `(seed, n)` tasks and writes them in `(seed, n)` order.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, ensure, Result};
use rwre_core::asymptotics::{
    exit_mgf_closed, exit_mgf_dp, fit_constant_lnln, fit_exponent, lambda_crit, lambda_eps,
    longest_fair_run, mgf_bound, srw_smalldev_constant, FairPredicate, TransformTag,
};
use rwre_core::bridge_sampler::{max_disp_samples, BridgeSampler, MaxDispSummary};
use rwre_core::com::{com_constants, verify_com_identity, BridgeEvent};
use rwre_core::env_model::KAPPA_TOL;
use rwre_core::exact_kernel::{
    bridge_log_prob, bridge_max_quantile, confined_log_prob, max_disp_bridge_cdf,
    max_disp_bridge_cdf_at,
};
use rwre_core::format::fmt_g17;
use rwre_core::{Environment, Execution, RegimeTag, SiteDistribution};

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{csv, RunDir};

pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub base_dir: &'a Path,
    pub seed_offset: u64,
}

impl Ctx<'_> {
    fn seeds(&self) -> Vec<u64> {
        self.cfg
            .seeds
            .iter()
            .map(|s| s.wrapping_add(self.seed_offset))
            .collect()
    }

    fn dist(&self) -> Result<SiteDistribution> {
        self.cfg.site_distribution(self.base_dir)
    }

    /// One environment per seed covering `[-span, span]`, reused for every n.
    fn envs(&self, dist: &SiteDistribution, span: i64) -> Result<Vec<(u64, Environment)>> {
        self.seeds()
            .into_iter()
            .map(|s| Ok((s, dist.sample_environment(-span, span, s)?)))
            .collect()
    }
}

/// Runs `f` on every `(seed, n)` pair in parallel and returns the results
/// in `(seed, n)` order.
fn per_task<R: Send>(
    envs: &[(u64, Environment)],
    grid: &[usize],
    f: impl Fn(u64, &Environment, usize) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    let tasks: Vec<(usize, usize)> = (0..envs.len())
        .flat_map(|i| grid.iter().map(move |&n| (i, n)))
        .collect();
    Execution::Parallel
        .map(&tasks, |&(i, n)| f(envs[i].0, &envs[i].1, n))
        .into_iter()
        .collect()
}

pub fn run(exp: Experiment, ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    match exp {
        Experiment::Kappa => kappa(ctx, out),
        Experiment::BridgeProb => bridge_prob(ctx, out),
        Experiment::Confined => confined(ctx, out),
        Experiment::MaxDispExact => max_disp_exact(ctx, out),
        Experiment::SampleBridge => sample_bridge(ctx, out),
        Experiment::Scaling => scaling(ctx, out),
        Experiment::SrwSmalldev => srw_smalldev(ctx, out),
        Experiment::MgfCheck => mgf_check(ctx, out),
        Experiment::ComCheck => com_check(ctx, out),
        Experiment::LongestRun => longest_run(ctx, out),
        Experiment::ConjectureExplore => conjecture_explore(ctx, out),
    }
}

fn g(x: f64) -> String {
    fmt_g17(x)
}

fn kappa(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let dist = ctx.dist()?;
    let class = dist.classify();
    let kappa = match class.tag {
        RegimeTag::Nestling => format!("{:.12}", dist.solve_kappa(KAPPA_TOL)?),
        RegimeTag::MarginallyNestling | RegimeTag::NonNestling => "inf".into(),
        RegimeTag::NotTransient => "nan".into(),
    };
    let or_nan = |r: rwre_core::Result<f64>| r.map(g).unwrap_or_else(|_| "nan".into());
    let rows = vec![
        format!("regime,{}", class.tag),
        format!("alpha,{}", g(class.alpha)),
        format!("omega_min,{}", g(dist.omega_min())),
        format!("mean_rho,{}", g(dist.mean_rho())),
        format!("mean_log_rho,{}", g(dist.mean_log_rho())),
        format!("kappa,{kappa}"),
        format!("speed,{}", or_nan(dist.speed())),
        format!("rate_i0,{}", or_nan(dist.rate_i0())),
    ];
    out.write("kappa.csv", &csv("quantity,value", rows))
}

fn bridge_prob(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let grid = ctx.cfg.require_grid()?;
    let envs = ctx.envs(&ctx.dist()?, *grid.last().unwrap() as i64)?;
    let rows = per_task(&envs, grid, |seed, env, n| {
        Ok(format!("{seed},{n},{}", g(bridge_log_prob(env, n)?)))
    })?;
    out.write("bridge_prob.csv", &csv("seed,n,log_prob", rows))
}

fn confined(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let grid = ctx.cfg.require_grid()?;
    let radius = |n: usize| -> Result<u64> {
        match (ctx.cfg.m, ctx.cfg.gamma) {
            (Some(m), _) => Ok(m),
            (None, Some(gamma)) => Ok(((gamma * (n as f64).ln()).ceil() as u64).max(1)),
            (None, None) => bail!("confined needs m or gamma"),
        }
    };
    let envs = ctx.envs(&ctx.dist()?, *grid.last().unwrap() as i64)?;
    let rows = per_task(&envs, grid, |seed, env, n| {
        let m = radius(n)?;
        let conf = confined_log_prob(env, 2 * n, m, true)?;
        let bridge = bridge_log_prob(env, n)?;
        Ok(format!(
            "{seed},{n},{m},{},{},{}",
            g(conf),
            g(bridge),
            g(conf - bridge)
        ))
    })?;
    out.write(
        "confined.csv",
        &csv(
            "seed,n,m,log_confined_bridge,log_bridge,log_conditional",
            rows,
        ),
    )
}

fn max_disp_exact(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let grid = ctx.cfg.require_grid()?;
    let envs = ctx.envs(&ctx.dist()?, *grid.last().unwrap() as i64)?;
    let results = per_task(&envs, grid, |seed, env, n| {
        let cdf = max_disp_bridge_cdf(env, n, Execution::Parallel)?;
        let rows: Vec<String> = cdf
            .ms
            .iter()
            .zip(&cdf.cdf)
            .map(|(m, f)| format!("{seed},{n},{m},{}", g(*f)))
            .collect();
        let q = |p| bridge_max_quantile(env, n, p);
        let quantiles = format!("{seed},{n},{},{},{}", q(0.05)?, q(0.5)?, q(0.95)?);
        Ok((rows, quantiles))
    })?;
    let (cdf_rows, q_rows): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    out.write(
        "max_disp_cdf.csv",
        &csv("seed,n,m,cdf", cdf_rows.into_iter().flatten()),
    )?;
    out.write(
        "max_disp_quantiles.csv",
        &csv("seed,n,q05,median,q95", q_rows),
    )
}

fn sample_bridge(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let grid = ctx.cfg.require_grid()?;
    ensure!(ctx.cfg.samples > 0, "samples must be positive");
    let envs = ctx.envs(&ctx.dist()?, *grid.last().unwrap() as i64)?;
    let results = per_task(&envs, grid, |seed, env, n| {
        let summary = max_disp_samples(env, n, ctx.cfg.samples, seed, Execution::Parallel)?;
        let sampler = BridgeSampler::new(env, n)?;
        let paths: Vec<_> = (0..ctx.cfg.paths)
            .map(|i| {
                (
                    format!("path_s{seed}_n{n}_{i}.csv"),
                    sampler.sample(seed, i as u64).to_csv(),
                )
            })
            .collect();
        Ok((format!("{seed},{}", summary.csv_row()), paths))
    })?;
    let mut rows = Vec::new();
    for (row, paths) in results {
        rows.push(row);
        for (name, text) in paths {
            out.write(&name, &text)?;
        }
    }
    let header = format!("seed,{}", MaxDispSummary::csv_header());
    out.write("sample_bridge.csv", &csv(&header, rows))
}

fn scaling(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let grid = ctx.cfg.require_grid()?;
    let dist = ctx.dist()?;
    let class = dist.classify();
    let envs = ctx.envs(&dist, *grid.last().unwrap() as i64)?;
    let values = per_task(&envs, grid, |_, env, n| Ok(bridge_log_prob(env, n)?))?;
    let exponent_target = dist.solve_kappa(KAPPA_TOL).ok().map(|k| k / (k + 1.0));
    let mut summary = Vec::new();
    for ((seed, _), chunk) in envs.iter().zip(values.chunks(grid.len())) {
        let series: Vec<(f64, f64)> = grid
            .iter()
            .map(|&n| n as f64)
            .zip(chunk.iter().copied())
            .collect();
        let mut fits = vec![fit_exponent(
            &series,
            TransformTag::LogLogNegLog,
            exponent_target,
        )?];
        if matches!(
            class.tag,
            RegimeTag::MarginallyNestling | RegimeTag::NonNestling
        ) {
            fits.push(fit_constant_lnln(
                &series,
                class.alpha,
                None,
                dist.rate_i0()?,
            )?);
        }
        for fit in fits {
            let tag = fit.transform_tag.as_str();
            out.write(&format!("scaling_s{seed}_{tag}.csv"), &fit.to_csv())?;
            summary.push(format!(
                "{seed},{tag},{},{},{},{},{}",
                g(fit.slope),
                g(fit.intercept),
                g(fit.max_residual),
                g(fit.last()),
                fit.target.map(g).unwrap_or_else(|| "nan".into())
            ));
        }
    }
    out.write(
        "scaling_summary.csv",
        &csv(
            "seed,transform,slope,intercept,max_residual,last,target",
            summary,
        ),
    )
}

fn srw_smalldev(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let grid = ctx.cfg.require_grid()?;
    let target = -PI * PI / 8.0;
    let rows: Result<Vec<String>> = Execution::Parallel
        .map(grid, |&n| {
            let x = ctx
                .cfg
                .x
                .unwrap_or_else(|| (n as f64).powf(0.4).ceil() as u64);
            let s = srw_smalldev_constant(n, x)?;
            Ok(format!(
                "{n},{x},{},{},{}",
                g(s.log_prob),
                g(s.normalized),
                g(target)
            ))
        })
        .into_iter()
        .collect();
    out.write(
        "srw_smalldev.csv",
        &csv("n,x,log_prob,normalized,target", rows?),
    )
}

fn mgf_check(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let ells = if ctx.cfg.ell.is_empty() {
        vec![2, 3, 5]
    } else {
        ctx.cfg.ell.clone()
    };
    let eps = if ctx.cfg.eps.is_empty() {
        vec![0.05, 0.1, 0.2]
    } else {
        ctx.cfg.eps.clone()
    };
    let frac = ctx.cfg.lambda_fraction;
    ensure!(
        (0.0..1.0).contains(&frac),
        "lambda_fraction must lie in [0, 1)"
    );
    ensure!(
        ells.iter().all(|&l| l >= 2),
        "ell entries must be at least 2"
    );
    let rows: Result<Vec<String>> = Execution::Parallel
        .map(&ells, |&ell| {
            let lambda = frac * lambda_crit(ell);
            let closed = exit_mgf_closed(ell, lambda)?;
            let dp = exit_mgf_dp(ell, lambda, 1e-14)?;
            Ok(format!(
                "{ell},{},{},{},{}",
                g(lambda),
                g(closed),
                g(dp),
                g((closed - dp).abs())
            ))
        })
        .into_iter()
        .collect();
    out.write("mgf.csv", &csv("ell,lambda,closed,dp,abs_diff", rows?))?;
    let mut bound_rows = Vec::new();
    for &e in &eps {
        for &ell in &ells {
            let lambda = lambda_eps(e, ell);
            let v = exit_mgf_closed(ell, lambda)?;
            let b = mgf_bound(e, ell);
            bound_rows.push(format!(
                "{},{ell},{},{},{},{}",
                g(e),
                g(lambda),
                g(v),
                g(b),
                v <= b
            ));
        }
    }
    out.write(
        "mgf_bound.csv",
        &csv("eps,ell,lambda,mgf,bound,holds", bound_rows),
    )
}

fn com_check(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let grid = ctx.cfg.require_grid()?;
    let dist = ctx.dist()?;
    let (c1, c2) = com_constants(&dist)?;
    out.write(
        "com_constants.csv",
        &csv(
            "quantity,value",
            vec![
                format!("c1,{}", g(c1)),
                format!("c2,{}", g(c2)),
                format!("rate_i0,{}", g(dist.rate_i0()?)),
            ],
        ),
    )?;
    let envs = ctx.envs(&dist, *grid.last().unwrap() as i64)?;
    let radii = &ctx.cfg.event_radii;
    let results = per_task(&envs, grid, |seed, env, n| {
        let mut events = vec![BridgeEvent::bridge()];
        events.extend(radii.iter().map(|&m| BridgeEvent::max_below(m)));
        let report = verify_com_identity(&dist, env, n, &events)?;
        let body = report.to_csv();
        Ok(body
            .lines()
            .skip(1)
            .map(|l| format!("{seed},{n},{l}"))
            .collect::<Vec<_>>())
    })?;
    out.write(
        "com_check.csv",
        &csv(
            "seed,n,event,lhs,rhs,lower,upper,max_abs_violation",
            results.into_iter().flatten(),
        ),
    )
}

/// `(R, longest run length, run start)` for each radius of one seed.
type RunsBySeed = Vec<Vec<(i64, usize, Option<i64>)>>;

fn longest_run(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let dist = ctx.dist()?;
    let r_grid = &ctx.cfg.r_grid;
    ensure!(!r_grid.is_empty(), "r_grid must not be empty");
    ensure!(
        r_grid.windows(2).all(|w| w[0] < w[1]) && r_grid[0] > 1,
        "r_grid must be ascending and > 1"
    );
    let (pred, alpha) = if ctx.cfg.fair == "min" {
        (
            FairPredicate::Equals(dist.omega_min()),
            dist.classify().alpha,
        )
    } else {
        let w = dist
            .support()
            .iter()
            .filter(|p| p.0 == 0.5)
            .map(|p| p.1)
            .sum::<f64>();
        (FairPredicate::Half, w)
    };
    let target = if alpha > 0.0 && alpha < 1.0 {
        1.0 / alpha.ln().abs()
    } else {
        f64::NAN
    };
    let r_max = *r_grid.last().unwrap();
    let seeds = ctx.seeds();
    let runs: Result<RunsBySeed> = Execution::Parallel
        .map(&seeds, |&seed| {
            let env = dist.sample_environment(0, r_max - 1, seed)?;
            r_grid
                .iter()
                .map(|&r| {
                    let run = longest_fair_run(&env, 0, r, pred)?;
                    Ok((r, run.length, run.start))
                })
                .collect()
        })
        .into_iter()
        .collect();
    let runs = runs?;
    let mut rows = Vec::new();
    for (seed, per_r) in seeds.iter().zip(&runs) {
        for &(r, len, start) in per_r {
            let start = start.map(|s| s.to_string()).unwrap_or_default();
            rows.push(format!(
                "{seed},{r},{len},{start},{}",
                g(len as f64 / (r as f64).ln())
            ));
        }
    }
    out.write("longest_run.csv", &csv("seed,r,length,start,ratio", rows))?;
    let summary = r_grid.iter().enumerate().map(|(j, &r)| {
        let mean = runs.iter().map(|v| v[j].1 as f64).sum::<f64>() / runs.len() as f64;
        format!(
            "{r},{},{},{},{}",
            runs.len(),
            g(mean),
            g(mean / (r as f64).ln()),
            g(target)
        )
    });
    out.write(
        "longest_run_summary.csv",
        &csv("r,envs,mean_length,mean_ratio,target", summary),
    )
}

fn conjecture_explore(ctx: &Ctx, out: &mut RunDir) -> Result<()> {
    let grid = ctx.cfg.require_grid()?;
    let betas = &ctx.cfg.beta;
    ensure!(!betas.is_empty(), "beta must list at least one exponent");
    ensure!(betas.iter().all(|&b| b > 2.0), "beta entries must exceed 2");
    let envs = ctx.envs(&ctx.dist()?, *grid.last().unwrap() as i64)?;
    let results = per_task(&envs, grid, |seed, env, n| {
        let ln_n = (n as f64).ln();
        let thresholds: Vec<u64> = betas
            .iter()
            .map(|b| ((n as f64 / ln_n.powf(*b)).ceil() as u64).max(1))
            .collect();
        let inside: Vec<u64> = thresholds
            .iter()
            .copied()
            .filter(|&t| t <= n as u64)
            .collect();
        let cdf = max_disp_bridge_cdf_at(env, n, &inside, Execution::Sequential)?;
        Ok(betas
            .iter()
            .zip(&thresholds)
            .map(|(b, &t)| {
                // P(max ≥ t) = 1 − P(max < t); a bridge never exceeds n.
                let p = cdf.at(t).map(|f| 1.0 - f).unwrap_or(0.0);
                format!("{seed},{n},{},{t},{}", g(*b), g(p))
            })
            .collect::<Vec<_>>())
    })?;
    out.write(
        "conjecture_explore.csv",
        &csv("seed,n,beta,threshold,prob", results.into_iter().flatten()),
    )
}
