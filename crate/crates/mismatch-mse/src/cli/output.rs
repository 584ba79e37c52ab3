//! CSV, SVG and gnuplot emitters. Output is byte-stable for identical input.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::cli::sweep::{Column, SweepGrid};
use crate::mse::LinearFilter;
use crate::rates::Phase;
use crate::simulator::TrialRecord;
use crate::spectrum::omega;

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn phase_letter(p: Option<Phase>) -> char {
    p.map(Phase::letter).unwrap_or('E')
}

/// Sweep grid as CSV: one row per cell. Failed cells get phase `E` and
/// empty numeric fields; free-energy columns are appended when requested.
pub fn sweep_csv(grid: &SweepGrid) -> String {
    let fe = grid.metadata.spec.outputs.free_energies;
    let mut out = String::from("param,rate,phase,mse,r_e,r_d,r_c,r_g");
    if fe {
        out.push_str(",fe_ferro,fe_glassy,fe_para");
    }
    out.push('\n');
    for col in &grid.columns {
        let r = col.rates.as_ref();
        for cell in &col.cells {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{}",
                col.param,
                cell.rate,
                phase_letter(cell.phase.map(|p| p.phase)),
                num(cell.mse),
                num(r.map(|r| r.r_e)),
                num(r.map(|r| r.r_d)),
                num(r.map(|r| r.r_c)),
                num(r.and_then(|r| r.r_g)),
            );
            if fe {
                let f = cell.free_energies;
                let _ = write!(
                    out,
                    ",{},{},{}",
                    num(f.map(|f| f.ferro)),
                    num(f.and_then(|f| f.glassy)),
                    num(f.map(|f| f.para))
                );
            }
            out.push('\n');
        }
    }
    out
}

pub fn emit_csv(grid: &SweepGrid, path: &Path) -> io::Result<()> {
    std::fs::write(path, sweep_csv(grid))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn phase_rgb(p: Option<Phase>) -> (f64, f64, f64) {
    match p {
        Some(Phase::Ferromagnetic) => (40.0, 90.0, 200.0),
        Some(Phase::Glassy) => (230.0, 140.0, 30.0),
        Some(Phase::Paramagnetic) => (120.0, 120.0, 120.0),
        None => (200.0, 0.0, 0.0),
    }
}

struct Axes {
    params: usize,
    log_lo: f64,
    log_hi: f64,
}

impl Axes {
    fn x(&self, i: f64) -> f64 {
        MARGIN + (WIDTH - 2.0 * MARGIN) * i / self.params as f64
    }

    fn y(&self, rate: f64) -> f64 {
        let t = if self.log_hi > self.log_lo {
            (rate.ln() - self.log_lo) / (self.log_hi - self.log_lo)
        } else {
            0.5
        };
        HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * t
    }
}

fn threshold_line(out: &mut String, axes: &Axes, cols: &[Column], pick: impl Fn(&Column) -> Option<f64>, style: &str) {
    let mut pts = Vec::new();
    for (i, c) in cols.iter().enumerate() {
        match pick(c).filter(|r| *r > 0.0) {
            Some(r) => {
                let y = axes.y(r).clamp(MARGIN, HEIGHT - MARGIN);
                pts.push(format!("{:.2},{:.2}", axes.x(i as f64 + 0.5), y));
            }
            None => {
                flush(out, &mut pts, style);
            }
        }
    }
    flush(out, &mut pts, style);
}

fn flush(out: &mut String, pts: &mut Vec<String>, style: &str) {
    if pts.len() >= 2 {
        let _ = writeln!(out, "<polyline fill=\"none\" {style} points=\"{}\"/>", pts.join(" "));
    }
    pts.clear();
}

/// Self-contained SVG: phase as hue, MSE as luminance, and threshold
/// polylines for `R_e` (solid) and the ferromagnetic edge (dashed).
pub fn sweep_svg(grid: &SweepGrid) -> String {
    let cols = &grid.columns;
    let rates = &grid.metadata.spec.rate_grid;
    let nr = rates.len();
    let log_rates: Vec<f64> = rates.iter().map(|r| r.ln()).collect();
    let axes = Axes { params: cols.len().max(1), log_lo: log_rates[0], log_hi: log_rates[nr - 1] };
    let edges: Vec<f64> = (0..=nr)
        .map(|k| {
            let l = if k == 0 {
                log_rates[0] - 0.5 * (log_rates.get(1).unwrap_or(&log_rates[0]) - log_rates[0])
            } else if k == nr {
                log_rates[nr - 1] + 0.5 * (log_rates[nr - 1] - log_rates[nr.saturating_sub(2)])
            } else {
                0.5 * (log_rates[k - 1] + log_rates[k])
            };
            axes.y(l.exp()).clamp(MARGIN, HEIGHT - MARGIN)
        })
        .collect();
    let max_mse = cols
        .iter()
        .flat_map(|c| c.cells.iter().filter_map(|x| x.mse))
        .fold(0.0, f64::max);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for (i, col) in cols.iter().enumerate() {
        let (x0, x1) = (axes.x(i as f64), axes.x(i as f64 + 1.0));
        for (k, cell) in col.cells.iter().enumerate() {
            let (r, g, b) = phase_rgb(cell.phase.map(|p| p.phase));
            let shade = match (cell.mse, max_mse > 0.0) {
                (Some(m), true) => 1.0 - 0.6 * (m / max_mse).clamp(0.0, 1.0),
                _ => 1.0,
            };
            let (ytop, ybot) = (edges[k + 1], edges[k]);
            let _ = writeln!(
                out,
                "<rect x=\"{x0:.2}\" y=\"{ytop:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({},{},{})\"/>",
                x1 - x0,
                (ybot - ytop).max(0.0),
                (r * shade).round(),
                (g * shade).round(),
                (b * shade).round()
            );
        }
    }
    threshold_line(&mut out, &axes, cols, |c| c.rates.as_ref().map(|r| r.r_e), "stroke=\"black\" stroke-width=\"1.5\"");
    threshold_line(
        &mut out,
        &axes,
        cols,
        |c| c.rates.as_ref().map(|r| r.ferro_threshold()),
        "stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"5,3\"",
    );
    let _ = writeln!(
        out,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let name = xml_escape(&grid.metadata.spec.name);
    let param = grid.metadata.spec.swept.name();
    let _ = writeln!(out, "<text x=\"{}\" y=\"30\" font-size=\"16\" text-anchor=\"middle\">{name}</text>", WIDTH / 2.0);
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{param}</text>",
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 18 {})\" text-anchor=\"middle\">R (nats, log scale)</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, col) in cols.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{:.3}</text>",
            axes.x(i as f64 + 0.5),
            HEIGHT - MARGIN + 14.0,
            col.param
        );
    }
    for r in [rates[0], rates[nr - 1]] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{:.2}\" font-size=\"9\" text-anchor=\"end\">{r:.3}</text>",
            MARGIN - 4.0,
            axes.y(r) + 3.0
        );
    }
    for (k, (label, p)) in [("F", Phase::Ferromagnetic), ("G", Phase::Glassy), ("P", Phase::Paramagnetic)]
        .iter()
        .enumerate()
    {
        let (r, g, b) = phase_rgb(Some(*p));
        let x = WIDTH - MARGIN + 10.0;
        let y = MARGIN + 20.0 * k as f64;
        let _ = writeln!(out, "<rect x=\"{x}\" y=\"{y}\" width=\"12\" height=\"12\" fill=\"rgb({r},{g},{b})\"/>");
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"11\">{label}</text>", x + 16.0, y + 10.0);
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_svg(grid: &SweepGrid, path: &Path) -> io::Result<()> {
    std::fs::write(path, sweep_svg(grid))
}

/// A gnuplot script drawing the phase map from the CSV at `csv_path`.
pub fn gnuplot_script(grid: &SweepGrid, csv_path: &str) -> String {
    let name = &grid.metadata.spec.name;
    let param = grid.metadata.spec.swept.name();
    format!(
        "set datafile separator ','\n\
         set logscale y\n\
         set xlabel '{param}'\n\
         set ylabel 'R (nats)'\n\
         set title '{name}'\n\
         set palette defined (0 'royalblue', 1 'orange', 2 'gray')\n\
         set cbrange [0:2]\n\
         unset colorbox\n\
         phase(s) = (s eq 'F') ? 0 : (s eq 'G') ? 1 : 2\n\
         plot '{csv_path}' every ::1 using 1:2:(phase(strcol(3))) with points pt 5 ps 1 palette notitle\n"
    )
}

/// Filter samples as CSV with columns `omega, re_xi, im_xi`.
pub fn filter_csv(filter: &LinearFilter) -> String {
    let n = filter.xi.len();
    let mut out = String::from("omega,re_xi,im_xi\n");
    for (j, z) in filter.xi.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", omega(j, n), z.re, z.im);
    }
    out
}

/// Per-trial simulator records as CSV.
pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("codebook_idx,trial_idx,sq_error_per_symbol,log_partition_per_symbol\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.codebook_idx, r.trial_idx, r.sq_error_per_symbol, r.log_partition_per_symbol
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::sweep::{run_sweep, InstanceTemplate, Outputs, SweepSpec, SweptParam};
    use crate::solvers::RootConfig;
    use crate::spectrum::FilterSpec;

    fn one_cell() -> SweepGrid {
        let spec = SweepSpec {
            name: "one".into(),
            template: InstanceTemplate {
                h_true: FilterSpec::Identity { gain: 1.0 },
                h_assumed: FilterSpec::Identity { gain: 1.0 },
                beta: 1.0,
                p_x: 1.0,
                grid_size: 32,
            },
            swept: SweptParam::Gain,
            param_grid: vec![1.0],
            rate_grid: vec![0.5],
            outputs: Outputs::default(),
        };
        run_sweep(&spec, 1, &RootConfig::default()).unwrap()
    }

    #[test]
    fn one_by_one_csv() {
        let csv = sweep_csv(&one_cell());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "param,rate,phase,mse,r_e,r_d,r_c,r_g");
        assert!(lines[1].starts_with("1,0.5,P,0.5,"));
        assert!(lines[1].ends_with(','));
    }

    #[test]
    fn svg_is_stable() {
        let g = one_cell();
        let a = sweep_svg(&g);
        assert_eq!(a, sweep_svg(&g));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(gnuplot_script(&g, "x.csv").contains("'x.csv'"));
    }
}
