use qpcocycle::analytic::{AnalyticContext, DomainGamma};
use qpcocycle::contraction::{build_certificate, default_pair_count, pair_grid, ContractionSampler};
use qpcocycle::lyapunov::{continuity_sweep, det_average, spectrum_exterior, spectrum_qr, top_exponent_mc};
use qpcocycle::reduction::{detect_constant_section, reduce_chain, DetectParams, Section};
use qpcocycle::{ComplexWeights, ContractionCertificate, Error, McParams, ProbabilityVector};
use serde_json::{json, Value};

use crate::config::{probability, Certify, ContractionConfig, Resolved, SweepPath};
use crate::error::CliError;
use crate::output::{joined, num, opt, Writer};

pub fn top(r: &Resolved, w: &mut Writer) -> Result<(), CliError> {
    let c = &r.config.top;
    let n_gen = r.system.n_generators();
    let ps = match &c.ps {
        Some(list) => list.iter().map(|v| probability(v, n_gen)).collect::<Result<Vec<_>, _>>()?,
        None => vec![r.p.clone()],
    };
    let ns = c.ns.clone().unwrap_or_else(|| vec![c.n]);
    let mut rows = Vec::new();
    for p in &ps {
        for &n in &ns {
            let params = McParams::new(n, c.samples, r.seed).with_burn_in(c.burn_in);
            params.validate().map_err(CliError::config)?;
            let e = top_exponent_mc(&r.system, p, &params)?;
            rows.push(vec![
                joined(p.as_slice()),
                n.to_string(),
                c.samples.to_string(),
                c.burn_in.to_string(),
                e.method.as_str().to_string(),
                num(e.value),
                num(e.stderr),
            ]);
        }
    }
    w.csv("top.csv", &[], &["p", "n", "samples", "burn_in", "method", "lambda", "stderr"], &rows)
}

pub fn spectrum(r: &Resolved, w: &mut Writer) -> Result<(), CliError> {
    let c = &r.config.spectrum;
    let params = McParams::new(c.n, c.samples, r.seed).with_burn_in(c.burn_in);
    params.validate().map_err(CliError::config)?;
    let qr = spectrum_qr(&r.system, &r.p, &params)?.with_gap_tol(c.gap_tol);
    let ext = spectrum_exterior(&r.system, &r.p, &params, c.compound_cap)?.with_gap_tol(c.gap_tol);
    let det = det_average(&r.system, &r.p, c.det_quad)?;
    let mut rows = Vec::new();
    let mut warnings = 0;
    for k in 0..qr.exponents.len() {
        let diff = qr.exponents[k] - ext.exponents[k];
        let se = (qr.stderr[k].powi(2) + ext.stderr[k].powi(2)).sqrt();
        // rounding floor for exponents estimated with zero spread
        let floor = 1e-12 * (1.0 + qr.exponents[k].abs());
        let status = if diff.abs() > 2.0 * se + floor { "warning" } else { "ok" };
        if status == "warning" {
            warnings += 1;
            eprintln!("warning: lambda_{} differs between methods by {diff:e} (2se = {:e})", k + 1, 2.0 * se);
        }
        rows.push(vec![
            (k + 1).to_string(),
            num(qr.exponents[k]),
            num(qr.stderr[k]),
            num(ext.exponents[k]),
            num(ext.stderr[k]),
            num(diff),
            num(se),
            status.to_string(),
        ]);
    }
    let comments = [
        ("det_average", num(det)),
        ("qr_sum", num(qr.sum())),
        ("qr_total_stderr", num(qr.total_stderr())),
        ("kappa_qr", qr.kappa.to_string()),
        ("kappa_exterior", ext.kappa.to_string()),
        ("warnings", warnings.to_string()),
    ];
    w.csv(
        "spectrum.csv",
        &comments,
        &["k", "qr", "qr_stderr", "exterior", "exterior_stderr", "diff", "combined_stderr", "status"],
        &rows,
    )
}

fn sweep_path(path: &SweepPath, n_gen: usize) -> Result<Vec<ProbabilityVector<f64>>, CliError> {
    match path {
        SweepPath::Points { points } => points.iter().map(|v| probability(v, n_gen)).collect(),
        SweepPath::Line { from, to, steps } => {
            if *steps < 2 || from.len() != to.len() {
                return Err(CliError::Config("line needs at least 2 steps and endpoints of equal length".into()));
            }
            (0..*steps)
                .map(|i| {
                    let s = i as f64 / (*steps - 1) as f64;
                    let v: Vec<f64> = from.iter().zip(to).map(|(&a, &b)| a + s * (b - a)).collect();
                    let p = ProbabilityVector::normalized(&v).map_err(CliError::config)?;
                    p.check_len(n_gen).map_err(CliError::config)?;
                    Ok(p)
                })
                .collect()
        }
        SweepPath::Simplex { resolution } => {
            if *resolution < n_gen {
                return Err(CliError::Config(format!("simplex resolution must be at least {n_gen}")));
            }
            let mut out = Vec::new();
            let mut k = vec![0usize; n_gen];
            compositions(*resolution, 0, &mut k, &mut |k| {
                let v: Vec<f64> = k.iter().map(|&x| x as f64).collect();
                out.push(ProbabilityVector::normalized(&v).expect("positive composition"));
            });
            Ok(out)
        }
    }
}

/// Compositions of `total` into `k.len()` positive parts, lexicographic.
fn compositions(total: usize, i: usize, k: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    let parts_left = k.len() - i;
    if parts_left == 1 {
        k[i] = total;
        f(k);
        return;
    }
    for x in 1..=total - (parts_left - 1) {
        k[i] = x;
        compositions(total - x, i + 1, k, f);
    }
}

pub fn sweep(r: &Resolved, w: &mut Writer) -> Result<(), CliError> {
    let c = &r.config.sweep;
    let params = McParams::new(c.n, c.samples, r.seed).with_burn_in(c.burn_in);
    params.validate().map_err(CliError::config)?;
    let path = match &c.path {
        Some(path) => sweep_path(path, r.system.n_generators())?,
        None => vec![r.p.clone()],
    };
    let pts = continuity_sweep(&r.system, &path, &params)?;
    let rows: Vec<Vec<String>> = pts
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                i.to_string(),
                joined(&s.p),
                s.estimate.method.as_str().to_string(),
                num(s.estimate.value),
                num(s.estimate.stderr),
                opt(s.diff),
            ]
        })
        .collect();
    w.csv("sweep.csv", &[], &["index", "p", "method", "lambda", "stderr", "diff"], &rows)
}

fn alpha_table(r: &Resolved, c: &ContractionConfig, alpha: f64) -> Result<Vec<Vec<String>>, CliError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CliError::Config(format!("alpha = {alpha} is outside (0, 1]")));
    }
    let d = r.system.d();
    let size = c.pair_grid.unwrap_or_else(|| default_pair_count(d));
    let mut s = ContractionSampler::new(&r.system, &r.p, pair_grid(d, size), c.n_max, c.samples, r.seed)
        .map_err(|e| match e {
            Error::InvalidParameter(_) => CliError::config(e),
            e => e.into(),
        })?;
    if c.refine {
        s.refine(&r.system, &r.p)?;
    }
    (0..=c.n_max)
        .map(|n| {
            let k = s.kn(n, alpha)?;
            let drift = s.drift(n)?;
            Ok(vec![n.to_string(), num(alpha), num(k.value), num(k.stderr), num(drift.value), num(drift.stderr)])
        })
        .collect()
}

pub fn contraction(r: &Resolved, w: &mut Writer) -> Result<(), CliError> {
    let c = &r.config.contraction;
    if let Some(alpha) = c.alpha {
        let rows = alpha_table(r, c, alpha)?;
        w.csv("kn_alpha.csv", &[], &["n", "alpha", "k", "stderr", "drift", "drift_stderr"], &rows)?;
    }
    let cert = build_certificate(&r.system, &r.p, &c.certificate_params(r.seed))?;
    write_certificate(&cert, w)
}

fn write_certificate(cert: &ContractionCertificate<f64>, w: &mut Writer) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = cert
        .kn_table
        .iter()
        .map(|row| {
            let drift = cert.drift_table.iter().find(|d| d.n == row.n);
            vec![
                row.n.to_string(),
                num(row.alpha),
                num(row.k),
                num(row.stderr),
                num(row.envelope),
                opt(drift.map(|d| d.drift)),
                opt(drift.map(|d| d.stderr)),
            ]
        })
        .collect();
    w.csv("kn.csv", &[], &["n", "alpha", "k", "stderr", "envelope", "drift", "drift_stderr"], &rows)?;
    let mut body = serde_json::to_value(cert).expect("certificate serializes");
    body["id"] = json!(cert.id());
    w.json("certificate.json", body)
}

pub fn analytic(r: &Resolved, w: &mut Writer) -> Result<(), CliError> {
    let c = &r.config.analytic;
    let mut params = c.params.clone();
    params.seed = r.seed;
    let cert = match c.certify {
        Certify::Off => None,
        Certify::Required => Some(build_certificate(&r.system, &r.p, &r.config.contraction.certificate_params(r.seed))?),
        Certify::Auto => match build_certificate(&r.system, &r.p, &r.config.contraction.certificate_params(r.seed)) {
            Ok(cert) => Some(cert),
            Err(Error::NoContractionFound { .. }) | Err(Error::Dimension(_)) => None,
            Err(e) => return Err(e.into()),
        },
    };
    let gamma = match (&cert, c.gamma) {
        (_, Some(g)) => g,
        (Some(cert), None) => DomainGamma::default_gamma(cert),
        (None, None) => 0.5,
    };
    if cert.is_none() && params.n.is_none() {
        params.n = Some(c.fallback_n);
    }
    let domain = DomainGamma::new(r.p.clone(), gamma).map_err(CliError::config)?;
    if let Some(cert) = &cert {
        domain.check_certificate(cert)?;
        write_certificate(cert, w)?;
    }
    let ctx = AnalyticContext::new(&r.system, domain, cert.as_ref(), &params)?;
    let points = match &c.points {
        Some(points) => points.clone(),
        None => vec![ComplexWeights::from_probability(&r.p)],
    };
    let mut evals = Vec::with_capacity(points.len());
    for z in &points {
        let e = ctx.eval(z)?;
        let cesaro: Vec<[f64; 2]> = ctx.cesaro_means(z).iter().map(|c| [c.re, c.im]).collect();
        let budget = e.budget();
        evals.push(json!({
            "z": e.z,
            "value": [e.value.re, e.value.im],
            "stderr": e.stderr,
            "tail_bound": e.tail_bound,
            "quad_error": e.quad_error,
            "budget": if budget.is_finite() { json!(budget) } else { Value::Null },
            "certified": e.tail_bound.is_some(),
            "cesaro": cesaro,
        }));
    }
    let mut body = json!({
        "gamma": gamma,
        "n": ctx.n(),
        "window": ctx.window(),
        "certified": cert.is_some(),
        "certificate_id": ctx.certificate_id(),
        "evaluations": evals,
    });
    if let Some(s) = &c.slice {
        let delta = &s.delta;
        let radius = match s.radius {
            Some(x) => x,
            None => s.radius_fraction * ctx.domain().slice_radius(delta),
        };
        let taylor = ctx.taylor_coeffs(delta, radius, s.k_max, s.nodes)?;
        let holo = ctx.verify_holomorphy(delta, radius, s.grid, s.h_fraction * radius)?;
        let rows: Vec<Vec<String>> = (0..taylor.coeffs.len())
            .map(|k| {
                vec![
                    k.to_string(),
                    num(taylor.coeffs[k].re),
                    num(taylor.coeffs[k].im),
                    num(taylor.stderr[k]),
                    num(taylor.noise_floor[k]),
                    opt(taylor.tail[k]),
                ]
            })
            .collect();
        w.csv(
            "taylor.csv",
            &[("delta", joined(delta)), ("radius", num(radius)), ("nodes", taylor.nodes.to_string())],
            &["k", "re", "im", "stderr", "noise_floor", "tail"],
            &rows,
        )?;
        let rows: Vec<Vec<String>> = holo
            .points
            .iter()
            .map(|p| vec![num(p.w[0]), num(p.w[1]), num(p.residual), num(p.stderr)])
            .collect();
        w.csv(
            "holomorphy.csv",
            &[("h", num(holo.h)), ("max_residual", num(holo.max_residual))],
            &["w_re", "w_im", "residual", "stderr"],
            &rows,
        )?;
        body["slice"] = json!({
            "delta": delta,
            "radius": radius,
            "max_cr_residual": holo.max_residual,
            "c1_abs": taylor.coeffs.get(1).map(|c| c.norm()),
        });
    }
    w.json("analytic.json", body)
}

pub fn reduce(r: &Resolved, w: &mut Writer) -> Result<(), CliError> {
    let c = &r.config.reduce;
    let d = r.system.d();
    let (sections, source) = if let Some(s) = &c.sections {
        (s.clone(), "config")
    } else if c.declared {
        let s = r
            .declared_sections
            .iter()
            .map(Section::constant)
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::config)?;
        (s, "fixture")
    } else if c.detect {
        let params = DetectParams { seed: r.seed, ..DetectParams::default() };
        (detect_constant_section(&r.system, &params).into_iter().collect(), "detected")
    } else {
        (Vec::new(), "none")
    };
    let chain = reduce_chain(&r.system, &r.p, &sections, &c.mc(r.seed)).map_err(|e| match e {
        Error::NonNested(_) | Error::Dimension(_) => CliError::config(e),
        e => e.into(),
    })?;
    let links: Vec<Value> = chain
        .links
        .iter()
        .map(|l| {
            json!({
                "level": l.level,
                "dim": l.dim,
                "defect": l.defect,
                "ambient": l.check.ambient,
                "restricted": l.check.restricted,
                "quotient": l.check.quotient,
                "dominant": l.check.dominant,
                "discrepancy": l.check.discrepancy,
                "combined_stderr": l.check.combined_stderr,
                "tie": l.check.tie,
                "pass": l.check.pass,
                "attribution": l.attribution,
            })
        })
        .collect();
    let t = &chain.terminal;
    let rows: Vec<Vec<String>> = chain
        .links
        .iter()
        .map(|l| {
            vec![
                l.level.to_string(),
                l.dim.to_string(),
                num(l.defect),
                num(l.check.ambient.value),
                num(l.check.restricted.value),
                num(l.check.quotient.value),
                num(l.check.discrepancy),
                num(l.check.combined_stderr),
                if l.check.pass { "pass" } else { "fail" }.to_string(),
            ]
        })
        .collect();
    w.csv(
        "reduce.csv",
        &[],
        &["level", "dim", "defect", "ambient", "restricted", "quotient", "discrepancy", "combined_stderr", "verdict"],
        &rows,
    )?;
    w.json(
        "reduce.json",
        json!({
            "d": d,
            "source": source,
            "dims": chain.dims(),
            "trivial": chain.links.is_empty(),
            "pass": chain.all_pass(),
            "links": links,
            "terminal": {
                "level": t.level,
                "branch": t.branch,
                "dim": t.dim,
                "lambda": t.lambda,
                "system": t.system,
            },
            "sections": sections,
        }),
    )
}
