use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Deserialize;

use super::AggregateRow;
use crate::error::{OsdaError, Result};
use crate::strategies::Strategy;

/// Published per-task results, kept for rendering next to full-scale runs.
pub const REFERENCE_FIXTURES_CSV: &str = include_str!("../../fixtures/reference_tables.csv");

/// One table cell, already formatted as percent with one decimal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableCell {
    pub acc_mean: String,
    pub acc_std: String,
    pub hsc_mean: String,
    pub hsc_std: String,
}

fn pct(v: f64) -> String {
    let s = format!("{:.1}", 100.0 * v);
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

impl TableCell {
    pub fn from_aggregate(row: &AggregateRow) -> Self {
        Self {
            acc_mean: pct(row.acc.mean),
            acc_std: pct(row.acc.std),
            hsc_mean: pct(row.h_score.mean),
            hsc_std: pct(row.h_score.std),
        }
    }

    pub fn acc_text(&self) -> String {
        format!("{} ± {}", self.acc_mean, self.acc_std)
    }

    pub fn hsc_text(&self) -> String {
        format!("{} ± {}", self.hsc_mean, self.hsc_std)
    }

    /// `Acc / Hsc`, e.g. `86.8 ± 0.2 / 88.4 ± 0.2`.
    pub fn text(&self) -> String {
        format!("{} / {}", self.acc_text(), self.hsc_text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct FixtureRow {
    pub source: String,
    pub dataset: String,
    pub task: String,
    pub strategy: Strategy,
    pub acc_mean: String,
    pub acc_std: String,
    pub hsc_mean: String,
    pub hsc_std: String,
    pub bold_acc: bool,
    pub bold_hsc: bool,
}

impl FixtureRow {
    pub fn cell(&self) -> TableCell {
        TableCell {
            acc_mean: self.acc_mean.clone(),
            acc_std: self.acc_std.clone(),
            hsc_mean: self.hsc_mean.clone(),
            hsc_std: self.hsc_std.clone(),
        }
    }
}

pub fn reference_fixtures() -> Result<Vec<FixtureRow>> {
    let mut r = csv::Reader::from_reader(REFERENCE_FIXTURES_CSV.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<Vec<FixtureRow>, _>>()?)
}

/// Task × strategy grid of formatted results.
#[derive(Debug, Clone, Default)]
pub struct ResultGrid {
    pub title: String,
    pub tasks: Vec<String>,
    pub strategies: Vec<Strategy>,
    cells: BTreeMap<(String, Strategy), TableCell>,
}

impl ResultGrid {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn insert(&mut self, task: &str, strategy: Strategy, cell: TableCell) {
        if !self.tasks.iter().any(|t| t == task) {
            self.tasks.push(task.to_string());
        }
        if !self.strategies.contains(&strategy) {
            self.strategies.push(strategy);
            self.strategies.sort();
        }
        self.cells.insert((task.to_string(), strategy), cell);
    }

    pub fn get(&self, task: &str, strategy: Strategy) -> Option<&TableCell> {
        self.cells.get(&(task.to_string(), strategy))
    }

    /// Grid of the published numbers for one dataset (`office31` or `officehome`).
    pub fn from_fixtures(rows: &[FixtureRow], dataset: &str) -> Self {
        let mut g = Self::new(format!("{dataset} (source=paper)"));
        for r in rows.iter().filter(|r| r.dataset == dataset) {
            g.insert(&r.task, r.strategy, r.cell());
        }
        g
    }

    /// Per row, which strategies hold the best Acc and the best Hsc. Ties
    /// at display precision are all flagged.
    pub fn best_flags(&self, task: &str) -> Result<Vec<(bool, bool)>> {
        let cells = self
            .strategies
            .iter()
            .map(|&s| {
                self.get(task, s).ok_or_else(|| {
                    OsdaError::invalid(format!("ragged grid: missing cell ({task}, {})", s.as_str()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let num = |s: &str| s.parse::<f64>().unwrap_or(f64::NEG_INFINITY);
        let best_acc = cells.iter().map(|c| num(&c.acc_mean)).fold(f64::NEG_INFINITY, f64::max);
        let best_hsc = cells.iter().map(|c| num(&c.hsc_mean)).fold(f64::NEG_INFINITY, f64::max);
        Ok(cells
            .iter()
            .map(|c| (num(&c.acc_mean) == best_acc, num(&c.hsc_mean) == best_hsc))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTables {
    /// Column-aligned markdown; best values wrapped in `**`.
    pub markdown: String,
    /// Long format: one line per (task, strategy).
    pub csv: String,
}

fn bold(text: String, on: bool) -> String {
    if on {
        format!("**{text}**")
    } else {
        text
    }
}

pub fn render_tables(grid: &ResultGrid) -> Result<RenderedTables> {
    if grid.tasks.is_empty() || grid.strategies.is_empty() {
        return Err(OsdaError::invalid("cannot render an empty result grid"));
    }
    let mut header = vec!["Task".to_string()];
    header.extend(grid.strategies.iter().map(|s| format!("{} (Acc / Hsc)", s.table_name())));
    let mut body = Vec::new();
    let mut csv_out = String::from("task,strategy,acc_mean,acc_std,hsc_mean,hsc_std,best_acc,best_hsc\n");
    for task in &grid.tasks {
        let flags = grid.best_flags(task)?;
        let mut row = vec![task.clone()];
        for (&s, &(ba, bh)) in grid.strategies.iter().zip(&flags) {
            let c = grid.get(task, s).expect("checked by best_flags");
            row.push(format!("{} / {}", bold(c.acc_text(), ba), bold(c.hsc_text(), bh)));
            let _ = writeln!(
                csv_out,
                "{task},{},{},{},{},{},{ba},{bh}",
                s.as_str(),
                c.acc_mean,
                c.acc_std,
                c.hsc_mean,
                c.hsc_std
            );
        }
        body.push(row);
    }

    let width = |s: &str| s.chars().count();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| std::iter::once(&header).chain(&body).map(|r| width(&r[i])).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - width(c))))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut md = String::new();
    if !grid.title.is_empty() {
        let _ = writeln!(md, "### {}\n", grid.title);
    }
    md.push_str(&line(&header));
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    md.push_str(&line(&rule));
    for row in &body {
        md.push_str(&line(row));
    }
    Ok(RenderedTables { markdown: md, csv: csv_out })
}
