use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use meandim_core::covers::{widim, CandidateFamily, RadiusGrid, WidimMode, WidimOptions, TAU_CMP};
use meandim_core::embedders::{
    delay_map_zk, eps_embed, genericity_experiment, separation_report, CollisionTest, Observable,
};
use meandim_core::genlin::{enumerate_patterns, pattern_generic_independent, PatternMatrix};
use meandim_core::meandim::{mdim_curve, mdim_estimate};
use meandim_core::rokhlin::{
    build_circle_towers_with_margin, product_towers, theorem2_pipeline, verify_towers, FactorMap, PipelineConfig,
    TowerSystem, TOWER_SCHEMA,
};
use meandim_core::rng;
use meandim_core::systems::{torus_rotation, DistMatrix, SampledAction, SampledSpace, SystemSpec, SYSTEM_SCHEMA};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{Outputs, RunConfig};
use crate::{Cmd, Failure, FamilyArg, Mode, SearchArgs, TestArg};

pub const SPACE_SCHEMA: &str = "meandim.space/1";
pub const FACTOR_SCHEMA: &str = "meandim.factor/1";
pub const OBSERVABLE_SCHEMA: &str = "meandim.observable/1";

type Run = Result<(String, u8), Failure>;

fn read(path: &Path, key: &str, cfg: &mut RunConfig) -> Result<(Vec<u8>, Value), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    let v: Value =
        serde_json::from_slice(&bytes).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    cfg.input(key, &bytes);
    Ok((bytes, v))
}

fn expect_schema(v: &Value, schema: &str, path: &Path) -> Result<(), Failure> {
    match v.get("schema").and_then(Value::as_str) {
        Some(s) if s == schema => Ok(()),
        Some(s) => Err(Failure::Parse(format!("{}: schema '{s}', expected '{schema}'", path.display()))),
        None => Err(Failure::Parse(format!("{}: missing 'schema'", path.display()))),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(v: Value, path: &Path) -> Result<T, Failure> {
    serde_json::from_value(v).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

fn load_system(path: &Path, key: &str, cfg: &mut RunConfig) -> Result<SampledAction, Failure> {
    let (_, v) = read(path, key, cfg)?;
    expect_schema(&v, SYSTEM_SCHEMA, path)?;
    let spec: SystemSpec = parse(v, path)?;
    spec.build().map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
struct SpaceFile {
    #[serde(default)]
    points: Option<Vec<String>>,
    dist: Vec<Vec<f64>>,
    #[serde(default)]
    coords: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    declared_dim: Option<usize>,
}

/// A space file, or the space of a system file.
fn load_space(path: &Path, cfg: &mut RunConfig) -> Result<SampledSpace, Failure> {
    let (_, v) = read(path, "space", cfg)?;
    let schema = v.get("schema").and_then(Value::as_str).unwrap_or_default().to_string();
    let bad = |e: meandim_core::Error| Failure::Parse(format!("{}: {e}", path.display()));
    if schema == SYSTEM_SCHEMA {
        let spec: SystemSpec = parse(v, path)?;
        return Ok(spec.build().map_err(bad)?.space);
    }
    expect_schema(&v, SPACE_SCHEMA, path)?;
    let f: SpaceFile = parse(v, path)?;
    let dist = DistMatrix::from_rows(&f.dist).map_err(bad)?;
    dist.check_metric(meandim_core::systems::TAU_TRI).map_err(bad)?;
    let labels = f.points.unwrap_or_else(|| (0..dist.len()).map(|i| i.to_string()).collect());
    let mut s = SampledSpace::new(labels, dist, f.declared_dim).map_err(bad)?;
    if let Some(c) = f.coords {
        s = s.with_coords(c).map_err(bad)?;
    }
    Ok(s)
}

#[derive(Serialize, Deserialize)]
struct ObservableFile {
    schema: String,
    #[serde(flatten)]
    observable: Observable,
}

/// The observable from a file, or a seeded random trigonometric one.
fn observable(
    path: Option<&Path>,
    m: usize,
    degree: u32,
    s: &SampledSpace,
    seed: u64,
    cfg: &mut RunConfig,
) -> Result<Observable, Failure> {
    match path {
        Some(p) => {
            let (_, v) = read(p, "observable", cfg)?;
            expect_schema(&v, OBSERVABLE_SCHEMA, p)?;
            let f: ObservableFile = parse(v, p)?;
            if f.observable.m != m {
                return Err(Failure::Parse(format!("{}: observable has m = {}, expected {m}", p.display(), f.observable.m)));
            }
            Ok(f.observable)
        }
        None => {
            cfg.param("degree", degree);
            let input_dim = s
                .coords
                .as_ref()
                .and_then(|c| c.first().map(Vec::len))
                .ok_or_else(|| Failure::Parse("a random observable needs point coordinates".into()))?;
            Ok(Observable::random_trig(m, degree, input_dim, rng::child_seed(seed, "observable", 0)))
        }
    }
}

fn options(search: &SearchArgs, seed: u64, cfg: &mut RunConfig) -> WidimOptions {
    cfg.param("family", family_name(search.family)).param("steps", search.steps);
    WidimOptions {
        radii: RadiusGrid::AllDistances,
        family: match search.family {
            FamilyArg::Balls => CandidateFamily::Balls,
            FamilyArg::Pairs => CandidateFamily::BallsAndNeighbourPairs,
        },
        search_steps: search.steps,
        seed: rng::child_seed(seed, "widim", 0),
        ..WidimOptions::default()
    }
}

fn family_name(f: FamilyArg) -> &'static str {
    match f {
        FamilyArg::Balls => "balls",
        FamilyArg::Pairs => "pairs",
    }
}

fn mode_of(m: Mode) -> WidimMode {
    match m {
        Mode::Exact => WidimMode::Exact,
        Mode::Greedy => WidimMode::Greedy,
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Exact => "exact",
        Mode::Greedy => "greedy",
    }
}

fn fmt_vec(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

/// Maximal runs of consecutive sample indices on a circle of `n` points, as
/// arcs [start, end) in turns.
fn arcs(points: &[usize], n: usize) -> Vec<(f64, f64)> {
    let mut mark = vec![false; n];
    for &p in points {
        mark[p] = true;
    }
    if mark.iter().all(|&b| b) {
        return vec![(0.0, 1.0)];
    }
    let first_gap = mark.iter().position(|&b| !b).unwrap_or(0);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let p = (first_gap + i) % n;
        if mark[p] {
            let mut len = 0;
            while len < n && mark[(p + len) % n] {
                len += 1;
            }
            out.push((p as f64 / n as f64, (p + len) as f64 / n as f64));
            i += len;
        } else {
            i += 1;
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

pub fn run(cmd: Cmd, seed: u64, outs: &mut Outputs) -> Run {
    match cmd {
        Cmd::Widim { space, eps, lam, mode, search } => {
            let mut cfg = RunConfig::new("widim", seed);
            cfg.param("eps", eps).param("lam", lam).param("mode", mode_name(mode));
            let opts = options(&search, seed, &mut cfg);
            let s = load_space(&space, &mut cfg)?;
            let r = widim(&s, eps, lam, mode_of(mode), &opts)?;
            outs.csv(
                "widim.csv",
                &["eps", "lam", "mode", "order", "sets", "candidates"],
                [vec![
                    eps.to_string(),
                    lam.to_string(),
                    mode_name(mode).into(),
                    r.order.to_string(),
                    r.cover.sets.len().to_string(),
                    r.candidates.to_string(),
                ]],
            );
            let summary = format!("widim order {}", r.order);
            outs.json("widim.json", "meandim.widim-result/1", &cfg, &r);
            Ok((summary, 0))
        }
        Cmd::Mdim { system, eps, lam, n, mode, window, search } => {
            let mut cfg = RunConfig::new("mdim", seed);
            let ns: Vec<String> = n.iter().map(|x| x.to_string()).collect();
            cfg.param("eps", eps).param("lam", lam).param("n", ns.join(",")).param("mode", mode_name(mode));
            cfg.param("window", window);
            let opts = options(&search, seed, &mut cfg);
            let a = load_system(&system, "system", &mut cfg)?;
            let curve = mdim_curve(&a, eps, lam, &n, mode_of(mode), &opts)?;
            let est = mdim_estimate(&curve, window)?;
            outs.csv(
                "mdim.csv",
                &["n", "widim", "ratio", "mode"],
                curve.rows.iter().map(|r| {
                    vec![r.n.to_string(), r.value.to_string(), r.ratio.to_string(), format!("{:?}", r.mode).to_lowercase()]
                }),
            );
            let summary = format!("mdim estimate {} (upper bound only: {})", est.value, est.upper_bound_only);
            outs.json("mdim.json", "meandim.mdim-result/1", &cfg, json!({ "curve": curve, "estimate": est }));
            Ok((summary, 0))
        }
        Cmd::Towers { alpha, alphas, n, resolution, margin_steps } => {
            let mut cfg = RunConfig::new("towers", seed);
            let alphas: Vec<f64> = match (alpha, alphas) {
                (Some(a), _) => vec![a],
                (None, Some(v)) if !v.is_empty() => v,
                _ => return Err(Failure::Parse("one of --alpha or --alphas is required".into())),
            };
            cfg.param("alphas", fmt_vec(&alphas).join(",")).param("n", n).param("resolution", resolution);
            cfg.param("margin_steps", margin_steps);
            let mut parts = Vec::new();
            for &al in &alphas {
                parts.push(build_circle_towers_with_margin(al, n, resolution, margin_steps)?.1);
            }
            let t = product_towers(&parts, n)?;
            let (a, spec) = if alphas.len() == 1 {
                let a = meandim_core::systems::circle_rotation(alphas[0], resolution)?;
                (a, json!({"schema": SYSTEM_SCHEMA, "generator": "circle", "params": {"alpha": alphas[0], "n": resolution}}))
            } else {
                let a = torus_rotation(&alphas, resolution)?;
                (a, json!({"schema": SYSTEM_SCHEMA, "generator": "torus", "params": {"alphas": alphas, "grid": resolution}}))
            };
            let verdict = verify_towers(&t, &a);
            // Arcs of every translate, as products of the parts' arcs.
            let mut rows = Vec::new();
            let circles: Vec<SampledAction> = alphas
                .iter()
                .map(|&al| meandim_core::systems::circle_rotation(al, resolution))
                .collect::<meandim_core::Result<_>>()?;
            let part_imgs: Vec<Vec<Vec<usize>>> =
                circles.iter().map(|c| c.box_images(n)).collect::<meandim_core::Result<_>>()?;
            let k = alphas.len();
            for m in 0..t.bases.len() {
                let bits: Vec<usize> = (0..k).map(|ax| if k == 1 { m } else { (m >> (k - 1 - ax)) & 1 }).collect();
                for gi in 0..(n as usize).pow(k as u32) {
                    let mut g = vec![0usize; k];
                    let mut rest = gi;
                    for ax in (0..k).rev() {
                        g[ax] = rest % n as usize;
                        rest /= n as usize;
                    }
                    let per_axis: Vec<Vec<(f64, f64)>> = (0..k)
                        .map(|ax| {
                            let moved: Vec<usize> =
                                parts[ax].bases[bits[ax]].iter().map(|&u| part_imgs[ax][g[ax]][u]).collect();
                            arcs(&moved, resolution)
                        })
                        .collect();
                    let mut combos: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
                    for list in &per_axis {
                        combos = combos
                            .iter()
                            .flat_map(|c| list.iter().map(move |&ar| [c.clone(), vec![ar]].concat()))
                            .collect();
                    }
                    for c in combos {
                        let mut row = vec![m.to_string(), g.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")];
                        for (s, e) in c {
                            row.push(s.to_string());
                            row.push(e.to_string());
                        }
                        rows.push(row);
                    }
                }
            }
            let mut header = vec!["tower".to_string(), "g".to_string()];
            for ax in 0..k {
                header.push(format!("start_{ax}"));
                header.push(format!("end_{ax}"));
            }
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            outs.csv("towers.csv", &header, rows);
            // Input-compatible files: the payload plus schema, digest and seed.
            for (name, schema, mut v) in [
                ("towers.json", TOWER_SCHEMA, serde_json::to_value(&t).expect("towers serialise")),
                ("system.json", SYSTEM_SCHEMA, spec),
            ] {
                v["schema"] = json!(schema);
                v["config_digest"] = json!(cfg.digest());
                v["seed"] = json!(seed);
                let mut bytes = serde_json::to_vec_pretty(&v).expect("file serialises");
                bytes.push(b'\n');
                outs.raw(name, bytes);
            }
            let summary = format!("towers D = {} valid {} overlaps {} uncovered {}", t.d, verdict.valid, verdict.overlaps, verdict.uncovered);
            let code = if verdict.valid { 0 } else { 3 };
            outs.json("verdict.json", "meandim.tower-verdict/1", &cfg, &verdict);
            Ok((summary, code))
        }
        Cmd::Verify { system, towers } => {
            let mut cfg = RunConfig::new("verify", seed);
            let a = load_system(&system, "system", &mut cfg)?;
            let (_, v) = read(&towers, "towers", &mut cfg)?;
            expect_schema(&v, TOWER_SCHEMA, &towers)?;
            let t: TowerSystem = parse(v, &towers)?;
            let verdict = verify_towers(&t, &a);
            let summary = format!("valid {} overlaps {} uncovered {}", verdict.valid, verdict.overlaps, verdict.uncovered);
            let code = if verdict.valid { 0 } else { 3 };
            outs.json("verdict.json", "meandim.tower-verdict/1", &cfg, &verdict);
            Ok((summary, code))
        }
        Cmd::Pipeline { system, base, towers, factor, l, eps, delta, eta, lam, window, observable: obs, degree } => {
            let mut cfg = RunConfig::new("pipeline", seed);
            cfg.param("l", l).param("eps", eps).param("delta", delta).param("eta", eta).param("lam", lam);
            if let Some(w) = window {
                cfg.param("window", w);
            }
            let total = load_system(&system, "system", &mut cfg)?;
            let base_a = load_system(&base, "base", &mut cfg)?;
            let (_, tv) = read(&towers, "towers", &mut cfg)?;
            expect_schema(&tv, TOWER_SCHEMA, &towers)?;
            let t: TowerSystem = parse(tv, &towers)?;
            let (_, fv) = read(&factor, "factor", &mut cfg)?;
            expect_schema(&fv, FACTOR_SCHEMA, &factor)?;
            let pi: FactorMap = parse(fv, &factor)?;
            let f = observable(obs.as_deref(), (t.d + 1) * l, degree, &total.space, seed, &mut cfg)?;
            let pc = PipelineConfig {
                l,
                eps,
                delta,
                eta,
                lam,
                window,
                widim: WidimOptions { seed: rng::child_seed(seed, "widim", 0), ..WidimOptions::default() },
                seed: rng::child_seed(seed, "pipeline", 0),
            };
            let out = theorem2_pipeline(&total, &base_a, &pi, &t, &f, &pc)?;
            let values = out.g.evaluate(&total.space)?;
            let mut header = vec!["point".to_string()];
            header.extend((0..f.m).map(|j| format!("g{j}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            outs.csv("g.csv", &header, values.iter().enumerate().map(|(i, v)| [vec![i.to_string()], fmt_vec(v)].concat()));
            let r = &out.report;
            let summary = format!(
                "pipeline eta-injective {} violations {} fiber margin {} sup deviation {}",
                r.eta_injective, r.violations, r.fiber_margin, r.sup_deviation
            );
            let code = if r.eta_injective { 0 } else { 3 };
            outs.json("pipeline.json", "meandim.pipeline-result/1", &cfg, &out);
            Ok((summary, code))
        }
        Cmd::Delay { system, d, m, eta, observable: obs, degree } => {
            let mut cfg = RunConfig::new("delay", seed);
            cfg.param("d", d).param("m", m).param("eta", eta);
            let a = load_system(&system, "system", &mut cfg)?;
            let h = observable(obs.as_deref(), m, degree, &a.space, seed, &mut cfg)?;
            let vecs = delay_map_zk(&a, &h, d)?;
            let rep = separation_report(&vecs, &a.space.dist, None, eta);
            let width = vecs.first().map_or(0, |v| v.data.len());
            let mut header = vec!["point".to_string()];
            header.extend((0..width).map(|j| format!("c{j}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            outs.csv("delay.csv", &header, vecs.iter().enumerate().map(|(i, v)| [vec![i.to_string()], fmt_vec(&v.data)].concat()));
            let summary = format!("delay map eta-injective {} margin {}", rep.eta_injective, rep.eta_margin);
            outs.json("delay.json", "meandim.delay-result/1", &cfg, json!({ "observable": h, "report": rep }));
            Ok((summary, 0))
        }
        Cmd::Embed { space, eps, delta, lam, m, observable: obs, degree, mode, search } => {
            let mut cfg = RunConfig::new("embed", seed);
            cfg.param("eps", eps).param("delta", delta).param("lam", lam).param("m", m).param("mode", mode_name(mode));
            let opts = options(&search, seed, &mut cfg);
            let s = load_space(&space, &mut cfg)?;
            let f = observable(obs.as_deref(), m, degree, &s, seed, &mut cfg)?;
            // Mesh strictly below eps: a set of diameter eps would merge a
            // pair at distance eps.
            let w = widim(&s, eps - 10.0 * TAU_CMP, lam, mode_of(mode), &opts)?;
            let e = eps_embed(&s, &f, eps, delta, &w.cover, rng::child_seed(seed, "embed", 0))?;
            let values = e.g.evaluate(&s)?;
            let mut header = vec!["point".to_string()];
            header.extend((0..m).map(|j| format!("g{j}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            outs.csv("embed.csv", &header, values.iter().enumerate().map(|(i, v)| [vec![i.to_string()], fmt_vec(v)].concat()));
            let summary = format!(
                "eps-embedding sup deviation {} equal pairs {} cover order {}",
                e.report.sup_deviation, e.report.equal_pairs, w.order
            );
            outs.json("embed.json", "meandim.embed-result/1", &cfg, json!({ "cover": w, "embedding": e }));
            Ok((summary, 0))
        }
        Cmd::Generic { system, d, m, degree, seeds, eta, test, floor } => {
            let mut cfg = RunConfig::new("generic", seed);
            cfg.param("d", d).param("m", m).param("degree", degree).param("seeds", seeds).param("eta", eta);
            let test = match test {
                TestArg::Points => {
                    cfg.param("test", "points").param("floor", floor);
                    CollisionTest::Points { floor }
                }
                TestArg::Simplices => {
                    cfg.param("test", "simplices");
                    CollisionTest::Simplices
                }
            };
            let a = load_system(&system, "system", &mut cfg)?;
            let rep = genericity_experiment(&a, d, m, degree, seeds, eta, test, seed)?;
            outs.csv(
                "generic.csv",
                &["trial", "observable_seed", "pass"],
                (0..seeds).map(|i| {
                    vec![
                        i.to_string(),
                        rng::child_seed(seed, "generic", i).to_string(),
                        (!rep.failures.contains(&i)).to_string(),
                    ]
                }),
            );
            let summary = format!("genericity rate {} ({} of {})", rep.rate, rep.passes, rep.seeds);
            outs.json("generic.json", "meandim.generic-result/1", &cfg, &rep);
            Ok((summary, 0))
        }
        Cmd::Genlin { pattern, enumerate, trials } => {
            let mut cfg = RunConfig::new("genlin", seed);
            cfg.param("trials", trials);
            let patterns: Vec<PatternMatrix> = match (pattern, enumerate) {
                (Some(p), _) => {
                    cfg.param("pattern", &p);
                    let rows: Vec<Vec<u32>> =
                        serde_json::from_str(&p).map_err(|e| Failure::Parse(format!("--pattern: {e}")))?;
                    vec![PatternMatrix::new(rows)?]
                }
                (None, Some(v)) => {
                    if v.len() != 3 {
                        return Err(Failure::Parse("--enumerate takes k,l,r_max".into()));
                    }
                    cfg.param("enumerate", fmt_vec(&v.iter().map(|&x| x as f64).collect::<Vec<_>>()).join(","));
                    enumerate_patterns(v[0] as usize, v[1] as usize, v[2])
                }
                _ => return Err(Failure::Parse("one of --pattern or --enumerate is required".into())),
            };
            let mut rows = Vec::new();
            let mut reports = BTreeMap::new();
            for (i, p) in patterns.iter().enumerate() {
                let rep = pattern_generic_independent(p, trials, rng::child_seed(seed, "genlin", i as u64))?;
                let key = serde_json::to_string(&p.rows).expect("rows serialise");
                rows.push(vec![format!("\"{key}\""), rep.rate.rate.to_string(), rep.pit_nonzero.to_string()]);
                reports.insert(format!("{i:04}"), json!({ "pattern": p.rows, "report": rep }));
            }
            let all = reports.values().all(|r| r["report"]["rate"]["rate"] == json!(1.0) && r["report"]["pit_nonzero"] == json!(true));
            outs.csv("genlin.csv", &["pattern", "rate", "pit_nonzero"], rows);
            let summary = format!("{} patterns, all generic: {all}", patterns.len());
            outs.json("genlin.json", "meandim.genlin-result/1", &cfg, &reports);
            Ok((summary, 0))
        }
    }
}
