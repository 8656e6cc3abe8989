//! Gnuplot scripts for the CSV tables of a run.
//!
//! Scripts live next to the tables and refer to them by relative path, so
//! `cd <out> && gnuplot <script>.gp` renders a PNG.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;
use crate::output::RunManifest;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlotScript {
    pub name: String,
    pub content: String,
}

/// What to draw from one table.
struct Recipe {
    title: &'static str,
    x: &'static str,
    /// Columns drawn against `x`; a single entry when `group` is set.
    ys: &'static [&'static str],
    /// One curve per distinct value of this column.
    group: Option<&'static str>,
    /// Column naming each group in the key; defaults to `group`.
    label: Option<&'static str>,
    log_x: bool,
    log_y: bool,
    ylabel: &'static str,
}

fn recipe(file: &str) -> Option<Recipe> {
    let r = |title, x, ys, ylabel| Recipe { title, x, ys, group: None, label: None, log_x: false, log_y: false, ylabel };
    Some(match file {
        "residuals.csv" => Recipe { log_y: true, ..r("Residual history", "iteration", &["residual"], "relative residual") },
        "continuation_residuals.csv" => Recipe {
            group: Some("stage"),
            label: Some("eps"),
            log_y: true,
            ..r("Residual history per continuation stage", "iteration", &["residual"], "relative residual")
        },
        "continuation.csv" => Recipe {
            log_x: true,
            log_y: true,
            ..r("Continuation", "eps", &["regularization_share", "increment_K4", "increment_K8"], "value")
        },
        "weak_form.csv" => Recipe { log_y: true, ..r("Weak-form defects", "test", &["relative"], "relative defect") },
        "sweep.csv" => r("Sweep", "value", &["constant", "final_residual", "energy_equality"], "value"),
        "ap.csv" => Recipe {
            group: Some("alpha"),
            log_y: true,
            ..r("A_p constant under refinement", "level", &["constant"], "A_p constant")
        },
        "decay.csv" => Recipe {
            group: Some("member"),
            log_y: true,
            ..r("Bad-set decay per member", "level", &["value"], "|lambda chi_O|_s / |grad u|_s")
        },
        "envelope.csv" => Recipe { log_y: true, ..r("Decay envelope", "level", &["envelope", "bound"], "value") },
        "bounds.csv" => Recipe {
            group: Some("member"),
            ..r("Gradient bound of the truncation", "level", &["ratio"], "|grad u_j|_inf / lambda_j")
        },
        "bogovskii.csv" => r("Bogovskii ensemble", "sample", &["ratio_p1.5", "ratio_p2", "ratio_p3", "residual"], "value"),
        f if f.starts_with("samples_") => r("Inequality ratios", "seed", &["ratio"], "lhs / rhs"),
        _ => return None,
    })
}

fn quote(s: &str) -> String {
    s.replace('\'', "''")
}

/// Numeric display of a group value.
fn short(v: &str) -> String {
    v.parse::<f64>().map(|x| format!("{x}")).unwrap_or_else(|_| v.to_string())
}

fn script(file: &str, recipe: &Recipe, header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .map(|i| i + 1)
            .ok_or_else(|| CliError::Io(format!("{file}: missing column {name}")))
    };
    let x = col(recipe.x)?;
    let stem = file.trim_end_matches(".csv");
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    let _ = writeln!(s, "set output '{}.png'", quote(stem));
    let _ = writeln!(s, "set title '{}'", quote(recipe.title));
    let _ = writeln!(s, "set xlabel '{}'", quote(recipe.x));
    let _ = writeln!(s, "set ylabel '{}'", quote(recipe.ylabel));
    let _ = writeln!(s, "set key outside right");
    if recipe.log_x {
        let _ = writeln!(s, "set logscale x");
    }
    if recipe.log_y {
        let _ = writeln!(s, "set logscale y");
    }
    let src = format!("'{}'", quote(file));
    let mut clauses = Vec::new();
    match recipe.group {
        Some(g) => {
            let gi = col(g)?;
            let li = col(recipe.label.unwrap_or(g))?;
            let y = col(recipe.ys[0])?;
            let mut seen: Vec<(String, String)> = Vec::new();
            for row in rows {
                let key = &row[gi - 1];
                if !seen.iter().any(|(k, _)| k == key) {
                    seen.push((key.clone(), row[li - 1].clone()));
                }
            }
            for (key, label) in seen {
                clauses.push(format!(
                    "{src} skip 1 using {x}:(${gi} == {key} ? ${y} : 1/0) with linespoints title '{} = {}'",
                    quote(recipe.label.unwrap_or(g)),
                    quote(&short(&label)),
                ));
            }
        }
        None => {
            for name in recipe.ys {
                let Ok(y) = col(name) else { continue };
                clauses.push(format!("{src} skip 1 using {x}:{y} with linespoints title '{}'", quote(name)));
            }
        }
    }
    if clauses.is_empty() {
        return Err(CliError::Io(format!("{file}: nothing to plot")));
    }
    let _ = writeln!(s, "plot {}", clauses.join(", \\\n     "));
    Ok(s)
}

/// One script per plottable CSV of `manifest`, read from `dir`.
///
/// Fails on a manifest without CSV tables and on a listed table that is missing on disk.
pub fn emit_plots(manifest: &RunManifest, dir: &Path) -> Result<Vec<PlotScript>, CliError> {
    if manifest.artifacts.is_empty() {
        return Err(CliError::Io("manifest lists no artifacts".into()));
    }
    let mut csvs = manifest.csv_artifacts().peekable();
    if csvs.peek().is_none() {
        return Err(CliError::Io("manifest references no CSV tables".into()));
    }
    let mut out = Vec::new();
    for art in csvs {
        let path = dir.join(&art.path);
        if !path.is_file() {
            return Err(CliError::Io(format!("missing CSV {}", path.display())));
        }
        let Some(recipe) = recipe(&art.path) else { continue };
        let mut reader = csv::Reader::from_path(&path)?;
        let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(String::from).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(PlotScript {
            name: format!("{}.gp", art.path.trim_end_matches(".csv")),
            content: script(&art.path, &recipe, &header, &rows)?,
        });
    }
    Ok(out)
}
