//! Command pipelines. Each returns its artifacts, a stdout summary and a
//! pass/fail status; module errors carry the command name as context.

use amo_core::amo::{
    self, bands_csv, butterfly, butterfly_csv, convergent_ladder, fitted_constant, gap_labels,
    holder_check, local_dim_estimate, transport_cover, Direction, IdsTable, Rational, ThetaPolicy,
};
use amo_core::cantor::{
    build_tree, cantor_point, verify_tree, BranchPolicy, CantorPoint, CantorTree,
    ConstructionConstants, Mode,
};
use amo_core::circle::{cf_expand, check_separation, count_in_interval, CirclePoint};
use amo_core::gauge::{borel_cantelli_tail, tail_table, Cover};
use amo_core::mass::{assign_mass, default_r_grid, ln_first_gap, mdp_certificate};
use amo_core::resonance::{classify_d_delta, hits_csv, psi_hits, resonance_strength, Threshold};
use amo_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::artifact::{strip_schema, Artifact, RunOutput, Status};
use crate::plan::{Command, RunPlan};
use crate::CliError;

type Res<T> = Result<T, CliError>;

pub fn run_plan(plan: &RunPlan) -> Res<RunOutput> {
    let out = match plan.command {
        Command::Cf => cf(plan),
        Command::Separation => separation(plan),
        Command::Discrepancy => discrepancy(plan),
        Command::Resonance => resonance(plan),
        Command::CantorBuild => cantor_build(plan),
        Command::CantorAudit => cantor_audit(plan),
        Command::MassAssign => mass_assign(plan),
        Command::MdpCert => mdp_cert(plan),
        Command::Tail => tail(plan),
        Command::Butterfly => butterfly_cmd(plan),
        Command::Ids => ids(plan),
        Command::Holder => holder(plan),
        Command::Gaps => gaps(plan),
        Command::Localdim => localdim(plan),
        Command::MapBetaDelta => map_beta_delta(plan),
        Command::TransportCover => transport(plan),
    };
    out.map_err(|e| e.context(plan.command))
}

fn value<T: serde::Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("report serializes")
}

/// `+inf` and NaN have no JSON number form; they are written as strings.
fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(x.to_string()))
}

fn status(ok: bool, why: impl FnOnce() -> String) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail(why())
    }
}

fn output(status: Status, artifacts: Vec<Artifact>, summary: Value) -> Res<RunOutput> {
    Ok(RunOutput {
        status,
        artifacts,
        summary,
    })
}

fn log_grid(lo: f64, hi: f64, count: f64) -> Res<Vec<f64>> {
    if !(lo > 0.0 && hi > 0.0 && count >= 2.0 && count.fract() == 0.0) {
        return Err(CliError::Usage(format!(
            "grid needs positive ends and an integer count >= 2, got {lo},{hi},{count}"
        )));
    }
    let n = count as usize;
    Ok((0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect())
}

fn rational(plan: &RunPlan) -> Res<Rational> {
    Ok(plan.text_req("pq")?.parse::<Rational>()?)
}

fn theta(plan: &RunPlan) -> Res<ThetaPolicy> {
    match plan.raw("theta").unwrap_or("two-phase") {
        "two-phase" => Ok(ThetaPolicy::TwoPhase),
        other => match other.strip_prefix("grid:").map(str::parse::<usize>) {
            Some(Ok(m)) if m >= 1 => Ok(ThetaPolicy::Grid { m }),
            _ => Err(CliError::Usage(format!(
                "theta must be two-phase or grid:M, got {other:?}"
            ))),
        },
    }
}

fn ids_table(plan: &RunPlan, default_lambda: Option<f64>) -> Res<IdsTable> {
    let lambda = match default_lambda {
        Some(d) => plan.f64_or("lambda", d),
        None => plan.f64_req("lambda")?,
    };
    Ok(IdsTable::build(lambda, rational(plan)?, theta(plan)?)?)
}

fn cf(plan: &RunPlan) -> Res<RunOutput> {
    let alpha = plan.alpha()?;
    let depth = plan.u64_or("depth", 30) as usize;
    let cf = cf_expand(&alpha, depth)?;
    let check = cf.verify_identities();
    let mut csv = String::from("k,a_k,p_k,q_k\n");
    for (i, (a, (p, q))) in cf.partial_quotients.iter().zip(&cf.convergents).enumerate() {
        csv.push_str(&format!("{},{a},{p},{q}\n", i + 1));
    }
    let report = json!({
        "alpha": value(&alpha),
        "depth": depth,
        "partial_quotients": cf.partial_quotients,
        "denominators": cf.denominators().iter().map(|q| q.to_string()).collect::<Vec<_>>(),
        "identities_hold": check.is_ok(),
    });
    output(
        status(check.is_ok(), || check.unwrap_err().to_string()),
        vec![
            Artifact::csv("cf.csv", "amo.cf/1", csv),
            Artifact::json("cf.json", "amo.cf-report/1", report.clone()),
        ],
        report,
    )
}

fn separation(plan: &RunPlan) -> Res<RunOutput> {
    let alpha = plan.alpha()?;
    let q_max = plan.u64_or("q_max", 10_000);
    let mut reports = Vec::new();
    if let Some(n) = plan.u64_opt("n") {
        reports.push(check_separation(&alpha, n as usize, q_max)?);
    } else {
        for n in 1.. {
            match check_separation(&alpha, n, q_max) {
                Ok(r) => reports.push(r),
                Err(Error::ResourceCap { .. }) => break,
                Err(e) => return Err(CliError::from(e).context(format!("level {n}"))),
            }
        }
    }
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut csv =
        String::from("n,q_n,q_prev,min_dist,argmin,threshold,min_at_q_prev,above_threshold,pass\n");
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.q_n,
            r.q_prev,
            opt(r.min_dist),
            r.argmin.map(|k| k.to_string()).unwrap_or_default(),
            r.threshold,
            r.min_at_q_prev,
            r.above_threshold,
            r.pass
        ));
    }
    let failing: Vec<usize> = reports.iter().filter(|r| !r.pass).map(|r| r.n).collect();
    let summary = json!({ "levels": reports.len(), "q_max": q_max, "failing_levels": failing });
    output(
        status(failing.is_empty(), || {
            format!("separation fails at levels {failing:?}")
        }),
        vec![
            Artifact::csv("separation.csv", "amo.separation/1", csv),
            Artifact::json(
                "separation.json",
                "amo.separation-report/1",
                json!({ "summary": summary, "levels": value(&reports) }),
            ),
        ],
        summary,
    )
}

fn discrepancy(plan: &RunPlan) -> Res<RunOutput> {
    let alpha = plan.alpha()?;
    let (a, b) = match plan.numbers("interval", 2)? {
        Some(v) => (v[0], v[1]),
        None => return Err(CliError::Usage("discrepancy needs --interval a,b".into())),
    };
    let m = plan.u64_or("m", 0);
    let n = m
        .checked_add(plan.u64_or("len", 10_000))
        .ok_or_else(|| CliError::Usage("m + len overflows".into()))?;
    let rep = count_in_interval(&alpha, m, n, (a, b))?;
    let v = value(&rep);
    output(
        status(!rep.applicable || rep.within_bounds, || {
            format!(
                "count {} outside [{}, {}]",
                rep.count, rep.lower_bound, rep.upper_bound
            )
        }),
        vec![Artifact::json(
            "discrepancy.json",
            "amo.discrepancy/1",
            v.clone(),
        )],
        v,
    )
}

fn parse_leaf(tree: &CantorTree, raw: Option<&str>) -> Res<usize> {
    let Some(raw) = raw else {
        return Ok(tree.first_deep_leaf());
    };
    let path = raw
        .split('.')
        .map(str::parse::<u32>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("leaf {raw:?}: {e}")))?;
    tree.find(&path)
        .ok_or_else(|| CliError::Usage(format!("leaf {raw:?} is not a node of the tree")))
}

/// `[q of the first window, 2 × the deepest witness <= 10^6]`.
fn construction_window(p: &CantorPoint) -> Res<(u64, u64)> {
    let lo = p
        .window_qs
        .first()
        .and_then(|q| q.to_string().parse::<u64>().ok());
    let deepest = p
        .witnesses
        .iter()
        .filter_map(|w| w.to_string().parse::<u64>().ok())
        .filter(|&w| w <= 1_000_000)
        .max();
    match (lo, deepest) {
        (Some(lo), Some(w)) if lo < 2 * w => Ok((lo, 2 * w)),
        _ => Err(CliError::Usage(
            "no scannable construction window; pass --window".into(),
        )),
    }
}

fn resonance(plan: &RunPlan) -> Res<RunOutput> {
    let (alpha, x, window, target) = if plan.raw("tree").is_some() {
        let tree = load_tree(plan)?;
        let leaf = parse_leaf(&tree, plan.raw("leaf"))?;
        let p = cantor_point(&tree, leaf)?;
        let window = match plan.numbers("window", 2)? {
            Some(w) => (w[0] as u64, w[1] as u64),
            None => construction_window(&p)?,
        };
        let target = plan.delta_opt()?.unwrap_or(tree.delta_target);
        (tree.alpha.clone(), p.point, window, Some(target))
    } else {
        let alpha = plan.alpha()?;
        let x = CirclePoint::from_f64(plan.f64_req("x")?, alpha.precision_bits);
        let w = plan
            .numbers("window", 2)?
            .ok_or_else(|| CliError::Usage("resonance needs --window kmin,kmax".into()))?;
        (alpha, x, (w[0] as u64, w[1] as u64), plan.delta_opt()?)
    };
    let est = resonance_strength(&alpha, &x, window.0, window.1)?;
    let verdict = match target {
        Some(d) => {
            let tol = plan.f64_or("tol", if d.is_finite() { 0.1 * d } else { 0.1 });
            Some(classify_d_delta(&alpha, &x, d, window, tol)?)
        }
        None => None,
    };
    let mut artifacts = Vec::new();
    if let Some(eta) = plan.f64_opt("eta") {
        let hits = psi_hits(&alpha, &x, &Threshold::Exponential { eta }, window.1)?;
        artifacts.push(Artifact::csv("hits.csv", "amo.hits/1", hits_csv(&hits)));
    }
    let report = json!({
        "x": x.value_f64(),
        "window": [window.0, window.1],
        "estimate": value(&est),
        "verdict": verdict.as_ref().map(value),
    });
    artifacts.push(Artifact::json(
        "resonance.json",
        "amo.resonance/1",
        report.clone(),
    ));
    let ok = verdict.as_ref().map_or(true, |v| v.consistent);
    output(
        status(ok, || {
            "point is not consistent with the target strength".into()
        }),
        artifacts,
        report,
    )
}

fn build(plan: &RunPlan) -> Res<CantorTree> {
    let alpha = plan.alpha()?;
    let delta = plan.delta_req()?;
    let mode = match plan.raw("mode").unwrap_or("faithful") {
        "faithful" => Mode::Faithful,
        "toy" => Mode::Toy,
        other => {
            return Err(CliError::Usage(format!(
                "mode must be faithful or toy, got {other:?}"
            )))
        }
    };
    let policy = match plan.u64_or("branches", 0) {
        0 => BranchPolicy::Full,
        b => BranchPolicy::Sample {
            branches: b as usize,
        },
    };
    let depth = plan.u64_or("depth", 1) as usize;
    Ok(build_tree(
        &alpha,
        delta,
        &ConstructionConstants::for_mode(mode),
        depth,
        policy,
    )?)
}

/// The tree in `--tree`, or a fresh build from the plan.
fn load_tree(plan: &RunPlan) -> Res<CantorTree> {
    match plan.raw("tree") {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
            let (schema, body) = strip_schema(&text)?;
            if schema != TREE_SCHEMA {
                return Err(CliError::Usage(format!(
                    "{path} has schema {schema}, expected {TREE_SCHEMA}"
                )));
            }
            Ok(CantorTree::from_json(&body)?)
        }
        None => build(plan),
    }
}

const TREE_SCHEMA: &str = "amo.cantor-tree/1";

fn cantor_build(plan: &RunPlan) -> Res<RunOutput> {
    let tree = build(plan)?;
    let tree_json: Value =
        serde_json::from_str(&tree.to_canonical_json()).expect("canonical json parses");
    let mut csv = String::from("leaf,level,x,witnesses,deltas\n");
    for leaf in tree.leaves() {
        let node = &tree.nodes[leaf];
        if node.path.is_empty() {
            continue;
        }
        let p = cantor_point(&tree, leaf)
            .map_err(|e| CliError::from(e).context(format!("leaf {}", node.path_string())))?;
        let join = |v: Vec<String>| v.join(";");
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            node.path_string(),
            node.path.len(),
            p.point.value_f64(),
            join(p.witnesses.iter().map(|w| w.to_string()).collect()),
            join(p.deltas.iter().map(|d| d.to_string()).collect()),
        ));
    }
    let levels: Vec<usize> = (1..=tree.depth).map(|t| tree.level(t).count()).collect();
    let summary = json!({ "nodes": tree.nodes.len(), "leaves": tree.leaves().len(), "nodes_per_level": levels });
    output(
        Status::Pass,
        vec![
            Artifact::json("tree.json", TREE_SCHEMA, tree_json),
            Artifact::csv("points.csv", "amo.cantor-points/1", csv),
        ],
        summary,
    )
}

fn cantor_audit(plan: &RunPlan) -> Res<RunOutput> {
    let tree = load_tree(plan)?;
    let rep = verify_tree(&tree, plan.seed())?;
    let failures: Vec<Value> = rep.failures().map(value).collect();
    let summary = json!({ "pass": rep.pass, "checks": rep.entries.len(), "failures": failures });
    let n_fail = failures.len();
    output(
        status(rep.pass, || format!("{n_fail} audit checks failed")),
        vec![
            Artifact::csv("audit.csv", "amo.audit/1", rep.to_csv()),
            Artifact::json("audit.json", "amo.audit-report/1", summary.clone()),
        ],
        summary,
    )
}

fn mass_assign(plan: &RunPlan) -> Res<RunOutput> {
    let tree = load_tree(plan)?;
    let mu = assign_mass(&tree);
    let mut csv = String::from("node,path,level,mass,ln_mass,ln_node_bound\n");
    for (i, node) in tree.nodes.iter().enumerate() {
        let bound = if i == 0 {
            0.0
        } else {
            mu.ln_node_bound(&tree, i)
        };
        csv.push_str(&format!(
            "{i},{},{},{},{},{bound}\n",
            node.path_string(),
            node.path.len(),
            mu.mass(i),
            mu.ln_mass(i)
        ));
    }
    let violations: Vec<String> = mu
        .node_bound_violations(&tree)
        .into_iter()
        .map(|i| tree.nodes[i].path_string())
        .collect();
    let consistency = mu.max_consistency_error(&tree);
    let ok = violations.is_empty() && consistency < 2f64.powi(-100);
    let summary = json!({
        "max_consistency_error": num(consistency),
        "node_bound_violations": violations,
        "pass": ok,
    });
    let mut full = summary.clone();
    full["distribution"] = value(&mu);
    output(
        status(ok, || {
            format!(
                "{} node-bound violations, consistency {consistency:e}",
                violations.len()
            )
        }),
        vec![
            Artifact::csv("mass.csv", "amo.mass/1", csv),
            Artifact::json("mass.json", "amo.mass-report/1", full),
        ],
        summary,
    )
}

fn mdp_cert(plan: &RunPlan) -> Res<RunOutput> {
    let tree = load_tree(plan)?;
    let mu = assign_mass(&tree);
    let ln_r0 = ln_first_gap(&tree)?;
    let grid = default_r_grid(plan.f64_or("ln_r_min", -72.0), ln_r0, 8);
    let cert = mdp_certificate(&tree, &mu, plan.u64_or("samples", 1000) as usize, &grid)?;
    let report: Value = serde_json::from_str(&cert.to_json()).expect("certificate json parses");
    let summary = json!({
        "pass": cert.pass,
        "samples": cert.samples.len(),
        "excluded": cert.excluded,
        "worst_margin": num(cert.worst_margin),
        "ln_constant": num(cert.ln_constant),
        "ln_conclusion": cert.ln_conclusion.map(num),
    });
    output(
        status(cert.pass, || {
            format!("certificate fails, worst margin {}", cert.worst_margin)
        }),
        vec![
            Artifact::json("mdp.json", "amo.mdp/1", report),
            Artifact::csv("mdp_samples.csv", "amo.mdp-samples/1", cert.samples_csv()),
        ],
        summary,
    )
}

fn tail(plan: &RunPlan) -> Res<RunOutput> {
    let s = plan.f64_or("s", 2.0);
    let eta = plan.f64_or("eta", 1.0);
    let t = borel_cantelli_tail(eta, s, plan.u64_or("K", 100))?;
    let mut report = value(&t);
    report["tail"] = num(t.value);
    let mut artifacts = vec![Artifact::json("tail.json", "amo.tail/1", report.clone())];
    if let Some(ks) = plan.raw("ks") {
        let ks = ks
            .split(',')
            .map(|k| k.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("ks: {e}")))?;
        artifacts.push(Artifact::csv(
            "tail.csv",
            "amo.tail-table/1",
            tail_table(eta, s, &ks)?,
        ));
    }
    output(Status::Pass, artifacts, report)
}

fn butterfly_cmd(plan: &RunPlan) -> Res<RunOutput> {
    let lambda = plan.f64_or("lambda", 1.0);
    let q_max = plan.u64_or("q_max", 50);
    let rows = butterfly(lambda, q_max)?;
    let bands: usize = rows.iter().map(|r| r.bands.len()).sum();
    let summary =
        json!({ "lambda": lambda, "q_max": q_max, "frequencies": rows.len(), "bands": bands });
    output(
        Status::Pass,
        vec![Artifact::csv(
            "butterfly.csv",
            "amo.butterfly/1",
            butterfly_csv(&rows),
        )],
        summary,
    )
}

fn ids(plan: &RunPlan) -> Res<RunOutput> {
    let t = ids_table(plan, None)?;
    let e = plan.f64_opt("E");
    let (dn, de) = t.symmetry_defect();
    let report = json!({
        "lambda": t.spectrum.lambda,
        "pq": t.spectrum.frequency.to_string(),
        "E": e.map(num),
        "N": e.map(|e| num(t.n(e))),
        "bands": t.spectrum.bands.len(),
        "measure": num(t.spectrum.measure()),
        "symmetry_defect": [num(dn), num(de)],
    });
    output(
        Status::Pass,
        vec![
            Artifact::json("ids.json", "amo.ids/1", report.clone()),
            Artifact::csv(
                "ids_breakpoints.csv",
                "amo.ids-breakpoints/1",
                t.breakpoints_csv(),
            ),
            Artifact::csv("bands.csv", "amo.bands/1", bands_csv(&t.spectrum)),
        ],
        report,
    )
}

fn holder(plan: &RunPlan) -> Res<RunOutput> {
    let t = ids_table(plan, Some(0.5))?;
    let g = plan.numbers("eps", 3)?.unwrap_or(vec![1e-6, 0.1, 26.0]);
    let eps = log_grid(g[0], g[1], g[2])?;
    let es = t.spread_energies(plan.u64_or("samples", 100) as usize);
    let rep = holder_check(&t, &es, &eps)?;
    let summary = json!({
        "samples": es.len(),
        "eps": eps.len(),
        "c_low": num(rep.c_low),
        "c_high": num(rep.c_high),
        "c": num(rep.c),
        "violations": rep.violations.len(),
    });
    let n_viol = rep.violations.len();
    output(
        status(n_viol == 0, || format!("{n_viol} envelope violations")),
        vec![
            Artifact::csv("holder.csv", "amo.holder/1", rep.rows_csv()),
            Artifact::json("holder.json", "amo.holder-report/1", summary.clone()),
        ],
        summary,
    )
}

fn gaps(plan: &RunPlan) -> Res<RunOutput> {
    let t = ids_table(plan, None)?;
    let labels = gap_labels(&t);
    let mut csv = String::from("j,ids_value,lo,hi,open_in_union,k,ambiguous\n");
    for g in &labels {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            g.j, g.ids_value, g.lo, g.hi, g.open_in_union, g.k, g.ambiguous
        ));
    }
    let report = json!({ "pq": t.spectrum.frequency.to_string(), "gaps": value(&labels) });
    output(
        Status::Pass,
        vec![
            Artifact::csv("gaps.csv", "amo.gaps/1", csv),
            Artifact::json("gaps.json", "amo.gaps-report/1", report.clone()),
        ],
        report,
    )
}

fn localdim(plan: &RunPlan) -> Res<RunOutput> {
    let lambda = plan.f64_or("lambda", 0.5);
    let ladder = convergent_ladder(&plan.alpha()?, plan.u64_or("q_max", 377))?;
    let rungs = (plan.u64_or("rungs", 4) as usize).clamp(1, ladder.len());
    let ladder = &ladder[ladder.len() - rungs..];
    let g = plan.numbers("radii", 3)?.unwrap_or(vec![1e-4, 1e-11, 21.0]);
    let radii = log_grid(g[0], g[1], g[2])?;
    let e = plan.f64_req("E")?;
    match local_dim_estimate(lambda, ladder, e, &radii, plan.f64_opt("tol")) {
        Ok(est) => {
            let v = value(&est);
            let summary = json!({
                "E": e,
                "lower_est": num(est.lower_est),
                "upper_est": num(est.upper_est),
                "spread": num(est.spread),
            });
            output(
                Status::Pass,
                vec![Artifact::json("localdim.json", "amo.localdim/1", v)],
                summary,
            )
        }
        // reported, not fatal: the artifact records why
        Err(Error::Instability(why)) => {
            let v = json!({ "E": e, "instability": why });
            output(
                Status::Fail(format!("unstable estimate: {why}")),
                vec![Artifact::json("localdim.json", "amo.localdim/1", v.clone())],
                v,
            )
        }
        Err(e) => Err(e.into()),
    }
}

fn map_beta_delta(plan: &RunPlan) -> Res<RunOutput> {
    let lambda = plan.f64_req("lambda")?;
    let (beta, delta) = match (plan.f64_opt("beta"), plan.f64_opt("delta")) {
        (Some(b), None) => (b, amo::delta_of_beta(b, lambda)?),
        (None, Some(d)) => (amo::beta_of_delta(d, lambda)?, d),
        _ => {
            return Err(CliError::Usage(
                "map-beta-delta needs exactly one of --beta, --delta".into(),
            ))
        }
    };
    let report = json!({ "lambda": lambda, "beta": num(beta), "delta": num(delta) });
    output(
        Status::Pass,
        vec![Artifact::json(
            "beta_delta.json",
            "amo.beta-delta/1",
            report.clone(),
        )],
        report,
    )
}

fn parse_cover(raw: &str) -> Res<Cover> {
    let intervals = raw
        .split(';')
        .map(|piece| {
            let (a, b) = piece
                .split_once(',')
                .ok_or_else(|| CliError::Usage(format!("cover piece {piece:?} is not a,b")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| CliError::Usage(format!("cover piece {piece:?}: {e}")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect::<Res<Vec<_>>>()?;
    Ok(Cover::new(intervals)?)
}

/// Pieces well inside the admissible size, at uniform positions.
fn random_cover(
    t: &IdsTable,
    c: f64,
    direction: Direction,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Res<Cover> {
    let pieces = (0..count)
        .map(|_| match direction {
            Direction::FToD => {
                let bands = &t.spectrum.bands;
                let b = bands[rng.gen_range(0..bands.len())];
                let e = rng.gen_range(b.0..=b.1);
                let l = rng.gen_range(0.05..1.0) * c.powi(6);
                (e - 0.5 * l, e + 0.5 * l)
            }
            Direction::DToF => {
                let l = rng.gen_range(0.05..1.0) * (c / 6.0).powi(2);
                let mid = rng.gen_range(0.5 * l..1.0 - 0.5 * l);
                (mid - 0.5 * l, mid + 0.5 * l)
            }
        })
        .collect();
    Ok(Cover::new(pieces)?)
}

fn transport(plan: &RunPlan) -> Res<RunOutput> {
    let t = ids_table(plan, Some(0.5))?;
    let s = plan.f64_or("s", 2.0);
    let direction = match plan.raw("direction").unwrap_or("d-to-f") {
        "f-to-d" => Direction::FToD,
        "d-to-f" => Direction::DToF,
        other => {
            return Err(CliError::Usage(format!(
                "direction must be f-to-d or d-to-f, got {other:?}"
            )))
        }
    };
    let c = fitted_constant(&t)?;
    let rep = match plan.raw("cover") {
        Some(raw) => transport_cover(&t, &parse_cover(raw)?, s, direction, c)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed());
            let count = plan.u64_or("samples", 20) as usize;
            let mut attempt = 0;
            loop {
                let cover = random_cover(&t, c, direction, count, &mut rng)?;
                match transport_cover(&t, &cover, s, direction, c) {
                    Ok(rep) => break rep,
                    // a pull-back across a wide gap: draw again
                    Err(Error::Precondition(_)) if attempt < 100 => attempt += 1,
                    Err(e) => return Err(e.into()),
                }
            }
        }
    };
    let summary = json!({
        "pass": rep.pass,
        "ratio": num(rep.ratio),
        "bound": num(rep.bound),
        "c": num(c),
        "case1": rep.case1,
        "case2": rep.case2,
    });
    output(
        status(rep.pass, || {
            format!(
                "ratio {} exceeds {} or a cubic check fails",
                rep.ratio, rep.bound
            )
        }),
        vec![Artifact::json(
            "transport.json",
            "amo.transport/1",
            value(&rep),
        )],
        summary,
    )
}
