use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use ssm_core::branching::{generate_matrix, BranchingMatrix};
use ssm_core::dms::{check_dms, falsify, DmsCertificate};
use ssm_core::exact::{format_rational, ratio, to_decimal, to_f64};
use ssm_core::gibbs::{glauber_run, ln_rational, transfer_partition, weitz_partition_estimate, RNG_NAME};
use ssm_core::ising::{beta_star_from_rho, check_ising, perron_certificate, IsingCertificate};
use ssm_core::lattice::{parse_site_pins, GenericGraph, LatticeRegion, PinSet};
use ssm_core::sawtree::{ssm_probe, CapBoundary, ProbeMethod, SawTree};
use ssm_core::search::{max_lambda, search_certificate_from, SearchConfig};
use ssm_core::{Error, Rational};

use crate::{Boundary, Cmd, Method, Table};

/// What a command produced: human text, a JSON value for the run report,
/// the files it read, and whether the answer was negative (exit 1).
pub struct Output {
    pub text: String,
    pub value: Value,
    pub inputs: Vec<PathBuf>,
    pub negative: bool,
}

impl Output {
    fn new(text: String, value: Value, inputs: Vec<PathBuf>) -> Self {
        Output { text, value, inputs, negative: false }
    }

    pub fn error(e: &anyhow::Error) -> Self {
        Output { text: String::new(), value: json!({ "error": format!("{e:#}") }), inputs: Vec::new(), negative: false }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(path: Option<&PathBuf>, body: &str, text: &mut String) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, body).with_context(|| format!("writing {}", p.display()))?;
            writeln!(text, "wrote {}", p.display())?;
        }
        None => text.push_str(body),
    }
    Ok(())
}

fn load_matrix(path: &Path) -> Result<BranchingMatrix> {
    BranchingMatrix::parse(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_region(path: &Path, pins: Option<&PathBuf>) -> Result<(LatticeRegion, PinSet)> {
    let region = LatticeRegion::parse(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    let pinset = match pins {
        Some(p) => region.pins_from_sites(&parse_site_pins(&read(p)?)?)?,
        None => PinSet::new(),
    };
    Ok((region, pinset))
}

fn dec(r: &Rational) -> String {
    to_decimal(r, 12)
}

fn cfg(seed: u64, budget: usize, restarts: usize) -> SearchConfig {
    SearchConfig { seed, budget, restarts, ..SearchConfig::default() }
}

pub fn run(cmd: &Cmd) -> Result<Output> {
    match cmd {
        Cmd::GenMatrix { max_cycle, prune, output } => {
            let m = generate_matrix(*max_cycle, *prune)?;
            let mut text = String::new();
            write_or_print(output.as_ref(), &m.to_text(), &mut text)?;
            if output.is_some() {
                writeln!(text, "{} types", m.t())?;
            }
            Ok(Output::new(text, json!({ "types": m.t(), "row_sums": m.row_sums(), "prune": prune, "max_cycle": max_cycle }), vec![]))
        }

        Cmd::CheckDms { matrix, cert, falsify_samples } => {
            let m = load_matrix(matrix)?;
            let c = DmsCertificate::parse(&read(cert)?).with_context(|| format!("in {}", cert.display()))?;
            let v = check_dms(&m, &c)?;
            let mut text = v.to_string();
            let mut negative = !v.pass;
            let mut falsified = Value::Null;
            if let (true, Some(n)) = (v.pass, falsify_samples) {
                let l = to_f64(&c.lambda_star);
                for lam in [l, l / 2.0] {
                    if let Some(f) = falsify(&m, &c, &v.d_hat, lam, *n)? {
                        writeln!(text, "FALSIFIED at lambda={lam}: type {} f({}) = {} > {}", f.type_index, f.alpha, f.value, f.bound)?;
                        falsified = json!({ "lambda": lam, "type": f.type_index, "alpha": f.alpha, "value": f.value, "bound": f.bound });
                        negative = true;
                        break;
                    }
                }
                if !negative {
                    writeln!(text, "sampling at {n} points per type found no value above the bound")?;
                }
            }
            let value = json!({
                "pass": v.pass,
                "per_type_slack": v.per_type_slack.iter().map(format_rational).collect::<Vec<_>>(),
                "d_hat": v.d_hat.iter().map(dec).collect::<Vec<_>>(),
                "witness": v.witness,
                "falsified": falsified,
            });
            Ok(Output { text, value, inputs: vec![matrix.clone(), cert.clone()], negative })
        }

        Cmd::Search { matrix, lambda, seed, budget, restarts, start, output } => {
            let m = load_matrix(matrix)?;
            let mut inputs = vec![matrix.clone()];
            let start_cert = match start {
                Some(p) => {
                    inputs.push(p.clone());
                    Some(DmsCertificate::parse(&read(p)?)?)
                }
                None => None,
            };
            let found = search_certificate_from(&m, lambda, &cfg(*seed, *budget, *restarts), start_cert.as_ref())?;
            let mut text = String::new();
            match &found {
                Some(c) => {
                    write_or_print(output.as_ref(), &c.to_text(), &mut text)?;
                    writeln!(text, "certificate found at lambda={}", format_rational(lambda))?;
                }
                None => writeln!(text, "no certificate found at lambda={} within budget {budget}", format_rational(lambda))?,
            }
            let value = json!({ "lambda": format_rational(lambda), "found": found.is_some(), "seed": seed, "budget": budget });
            Ok(Output { text, value, inputs, negative: found.is_none() })
        }

        Cmd::MaxLambda { matrix, lo, hi, tol, seed, budget, output } => {
            let m = load_matrix(matrix)?;
            if lo >= hi || tol <= &Rational::from_integer(0.into()) {
                bail!("need lo < hi and tol > 0");
            }
            let best = max_lambda(&m, lo, hi, tol, &cfg(*seed, *budget, 8))?;
            let mut text = String::new();
            let value = match &best {
                Some((l, c)) => {
                    if let Some(p) = output {
                        fs::write(p, c.to_text())?;
                    }
                    writeln!(text, "certified lambda* >= {} ({})", format_rational(l), dec(l))?;
                    json!({ "lambda": format_rational(l), "decimal": to_f64(l) })
                }
                None => {
                    writeln!(text, "no certificate at lo={}", format_rational(lo))?;
                    Value::Null
                }
            };
            Ok(Output { text, value, inputs: vec![matrix.clone()], negative: best.is_none() })
        }

        Cmd::Count { region, lambda, eps, gamma, exact, pins } => {
            let (reg, pinset) = load_region(region, pins.as_ref())?;
            let mut inputs = vec![region.clone()];
            inputs.extend(pins.iter().cloned());
            let mut text = String::new();
            if *exact {
                let z = transfer_partition(&reg, lambda, &pinset)?;
                writeln!(text, "{}", format_rational(&z))?;
                writeln!(text, "ln Z = {:.12}", ln_rational(&z))?;
                return Ok(Output::new(text, json!({ "z": format_rational(&z), "ln_z": ln_rational(&z) }), inputs));
            }
            if !pinset.is_empty() {
                bail!("pins are only supported with --exact");
            }
            let g = reg.to_graph();
            let mut gamma = *gamma;
            let est = loop {
                match weitz_partition_estimate(&g, lambda, *eps, gamma) {
                    Ok(e) => break e,
                    Err(Error::Bracket { .. }) if gamma < 0.95 => gamma = (gamma + 1.0) / 2.0,
                    Err(e) => return Err(e.into()),
                }
            };
            writeln!(text, "ln Z = {:.12}", est.log_value)?;
            writeln!(text, "Z in [{}, {}]", dec(&est.z_lower), dec(&est.z_upper))?;
            writeln!(text, "ln(upper/lower) = {:e}", est.relative_error_bound)?;
            writeln!(text, "depth = {}", est.per_vertex_depths.iter().max().copied().unwrap_or(0))?;
            let value = json!({
                "ln_z": est.log_value,
                "z_lower": format_rational(&est.z_lower),
                "z_upper": format_rational(&est.z_upper),
                "relative_error_bound": est.relative_error_bound,
                "gamma_used": gamma,
            });
            Ok(Output::new(text, value, inputs))
        }

        Cmd::Sample { region, lambda, steps, seed, burnin, pins, output } => {
            let (reg, pinset) = load_region(region, pins.as_ref())?;
            let run = glauber_run(&reg.to_graph(), lambda, &pinset, *steps, *burnin, *seed)?;
            let mut buf = Vec::new();
            writeln!(buf, "# rng={RNG_NAME} seed={seed} steps={steps} burnin={burnin} lambda={}", format_rational(lambda))?;
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["i", "j", "frequency"])?;
                for (k, f) in run.frequencies.iter().enumerate() {
                    let (i, j) = reg.site(k);
                    w.write_record([i.to_string(), j.to_string(), format!("{f:.8}")])?;
                }
                w.flush()?;
            }
            let body = String::from_utf8(buf)?;
            let mut text = String::new();
            write_or_print(output.as_ref(), &body, &mut text)?;
            let mut inputs = vec![region.clone()];
            inputs.extend(pins.iter().cloned());
            let value = json!({ "frequencies": run.frequencies, "std_errors": run.std_errors, "invariant_violations": run.invariant_violations, "rng": RNG_NAME });
            Ok(Output { text, value, inputs, negative: run.invariant_violations > 0 })
        }

        Cmd::SawMarginal { graph, root, lambda, pins, depth, boundary } => {
            let g = GenericGraph::parse(&read(graph)?).with_context(|| format!("in {}", graph.display()))?;
            let pinset = match pins {
                Some(p) => PinSet::parse(&read(p)?)?,
                None => PinSet::new(),
            };
            let cap = depth.unwrap_or(g.n().max(1));
            let tree = SawTree::build(&g, *root, cap, &pinset)?;
            let b = match boundary {
                Some(Boundary::Occ) => CapBoundary::AllOccupied,
                Some(Boundary::Unocc) => CapBoundary::AllUnoccupied,
                None => CapBoundary::Free,
            };
            let a = tree.root_unoccupied_prob(lambda, b)?;
            let text = format!("{}\n{}\n", format_rational(&a), dec(&a));
            let mut inputs = vec![graph.clone()];
            inputs.extend(pins.iter().cloned());
            Ok(Output::new(
                text,
                json!({ "alpha": format_rational(&a), "decimal": to_f64(&a), "tree_nodes": tree.len(), "truncated": tree.is_truncated() }),
                inputs,
            ))
        }

        Cmd::ProbeSsm { lmax, lambda, method } => {
            let method = match method {
                Method::Auto => ProbeMethod::Auto,
                Method::Saw => ProbeMethod::SawTree,
                Method::Transfer => ProbeMethod::Transfer,
            };
            let gaps = ssm_probe(*lmax, lambda, method)?;
            let mut text = String::from("L gap ratio\n");
            let mut rows = Vec::new();
            let mut prev: Option<f64> = None;
            for (l, g) in &gaps {
                let gf = to_f64(g);
                let r = prev.map(|p| if p > 0.0 { gf / p } else { f64::NAN });
                writeln!(text, "{l} {:.6e} {}", gf, r.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()))?;
                rows.push(json!({ "L": l, "gap": format_rational(g), "decimal": gf }));
                prev = Some(gf);
            }
            Ok(Output::new(text, json!(rows), vec![]))
        }

        Cmd::IsingCheck { matrix, tanh, cert } => {
            let m = load_matrix(matrix)?;
            let mut inputs = vec![matrix.clone()];
            let c = match cert {
                Some(p) => {
                    inputs.push(p.clone());
                    IsingCertificate::parse(&read(p)?)?.c
                }
                None => perron_certificate(&m, 5000).1,
            };
            let v = check_ising(&m, &IsingCertificate { tanh_beta_star: tanh.clone(), c })?;
            let value =
                json!({ "pass": v.pass, "beta_lo": to_f64(&v.beta_star.lo), "beta_hi": to_f64(&v.beta_star.hi), "witness": v.witness });
            Ok(Output { text: v.to_string(), value, inputs, negative: !v.pass })
        }

        Cmd::IsingBetaStar { matrix, iters } => {
            let m = load_matrix(matrix)?;
            let (rho, _) = perron_certificate(&m, *iters);
            let mut text = format!("rho <= {}\n", dec(&rho));
            let value = match beta_star_from_rho(&rho) {
                Some(b) => {
                    writeln!(text, "beta* in {b}")?;
                    json!({ "rho": format_rational(&rho), "beta_lo": to_f64(&b.lo), "beta_hi": to_f64(&b.hi) })
                }
                None => {
                    writeln!(text, "rho <= 1: every beta is certified")?;
                    json!({ "rho": format_rational(&rho), "beta_lo": null, "beta_hi": null })
                }
            };
            Ok(Output::new(text, value, vec![matrix.clone()]))
        }

        Cmd::ReproduceTable { which, seed, budget, max_types } => match which {
            Table::Types => table_types(),
            Table::Lambda => table_lambda(&cfg(*seed, *budget, 8), *max_types),
            Table::Ising => table_ising(),
        },
    }
}

/// (max cycle, pruned, reference type count, reference lambda*)
const LAMBDA_ROWS: [(u32, bool, usize, &str); 4] =
    [(4, false, 4, "1.8801"), (4, true, 17, "2.1625"), (6, true, 132, "2.3335"), (8, true, 922, "2.3882")];

fn table_types() -> Result<Output> {
    let mut text = String::from("max_cycle pruned types reference match\n");
    let mut rows = Vec::new();
    for (k, prune, want, _) in LAMBDA_ROWS {
        let t = generate_matrix(k, prune)?.t();
        writeln!(text, "{k} {} {t} {want} {}", if prune { "yes" } else { "no" }, t == want)?;
        rows.push(json!({ "max_cycle": k, "pruned": prune, "types": t, "reference": want }));
    }
    Ok(Output::new(text, json!(rows), vec![]))
}

fn table_lambda(cfg: &SearchConfig, max_types: usize) -> Result<Output> {
    let mut text = format!("max_cycle pruned types reference certified (seed {}, budget {})\n", cfg.seed, cfg.budget);
    let mut rows = Vec::new();
    for (k, prune, _, reference) in LAMBDA_ROWS {
        let m = generate_matrix(k, prune)?;
        let target = ssm_core::exact::parse_rational(reference)?;
        let certified =
            if m.t() > max_types { None } else { max_lambda(&m, &ratio(17, 10), &target, &ratio(1, 100), cfg)?.map(|(l, _)| l) };
        let shown = match (&certified, m.t() > max_types) {
            (_, true) => "skipped".to_string(),
            (Some(l), _) => to_decimal(l, 4),
            (None, _) => "none".to_string(),
        };
        writeln!(text, "{k} {} {} {reference} {shown}", if prune { "yes" } else { "no" }, m.t())?;
        rows.push(json!({ "max_cycle": k, "pruned": prune, "types": m.t(), "reference": reference, "certified": certified.as_ref().map(format_rational) }));
    }
    Ok(Output::new(text, json!(rows), vec![]))
}

fn table_ising() -> Result<Output> {
    let mut text = String::from("matrix types rho beta_lo beta_hi reference\n");
    let mut rows = Vec::new();
    let mut push = |name: String, m: &BranchingMatrix, reference: &str| -> Result<()> {
        let (rho, _) = perron_certificate(m, 20_000);
        let b = beta_star_from_rho(&rho).context("Perron bound not above 1")?;
        writeln!(text, "{name} {} {:.6} {:.6} {:.6} {reference}", m.t(), to_f64(&rho), to_f64(&b.lo), to_f64(&b.hi))?;
        rows.push(json!({ "matrix": name, "types": m.t(), "rho": to_f64(&rho), "beta_lo": to_f64(&b.lo), "beta_hi": to_f64(&b.hi), "reference": reference }));
        Ok(())
    };
    push("tree[3]".into(), &BranchingMatrix::single(3), "0.34657")?;
    let mut by_name = BTreeMap::new();
    for k in [4u32, 6, 8] {
        for prune in [false, true] {
            by_name.insert((k, prune), generate_matrix(k, prune)?);
        }
    }
    for ((k, prune), m) in &by_name {
        let reference = if *k == 8 { "0.392190" } else { "-" };
        push(format!("cycles<={k}{}", if *prune { ",pruned" } else { "" }), m, reference)?;
    }
    Ok(Output::new(text, json!(rows), vec![]))
}
