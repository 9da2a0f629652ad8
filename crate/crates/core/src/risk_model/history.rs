//! Monthly binary activity histories.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::catalog::RiskNetwork;
use crate::error::{CarpError, Result};

/// Calendar month, `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Month {
    pub year: i32,
    pub month: u8,
}

impl Month {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if (1..=12).contains(&month) {
            Ok(Month { year, month })
        } else {
            Err(CarpError::InvalidMonth(format!("{year:04}-{month:02}")))
        }
    }

    pub fn next(self) -> Month {
        if self.month == 12 {
            Month {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Month {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// `count` consecutive months starting at `self`.
    pub fn sequence(self, count: usize) -> Vec<Month> {
        std::iter::successors(Some(self), |m| Some(m.next()))
            .take(count)
            .collect()
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = CarpError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CarpError::InvalidMonth(s.to_string());
        let t = s.trim();
        let (y, m) = t.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u8 = m.parse().map_err(|_| bad())?;
        Month::new(year, month).map_err(|_| bad())
    }
}

/// Dense risks × months binary matrix. Row order follows the network the
/// history was loaded against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryMatrix {
    risk_ids: Vec<String>,
    months: Vec<Month>,
    states: Vec<bool>,
}

impl HistoryMatrix {
    /// `rows[i][t]` is the state of risk `i` in month `t`.
    pub fn from_rows(risk_ids: Vec<String>, months: Vec<Month>, rows: &[Vec<bool>]) -> Result<Self> {
        if rows.len() != risk_ids.len() {
            return Err(CarpError::DimensionMismatch {
                expected: risk_ids.len(),
                actual: rows.len(),
            });
        }
        let t = months.len();
        let mut states = Vec::with_capacity(t * rows.len());
        for row in rows {
            if row.len() != t {
                return Err(CarpError::DimensionMismatch {
                    expected: t,
                    actual: row.len(),
                });
            }
            states.extend_from_slice(row);
        }
        Ok(HistoryMatrix {
            risk_ids,
            months,
            states,
        })
    }

    /// History whose month `t` is `columns[t]`.
    pub fn from_columns(risk_ids: Vec<String>, start: Month, columns: &[Vec<bool>]) -> Result<Self> {
        let r = risk_ids.len();
        let mut rows = vec![Vec::with_capacity(columns.len()); r];
        for col in columns {
            if col.len() != r {
                return Err(CarpError::DimensionMismatch {
                    expected: r,
                    actual: col.len(),
                });
            }
            for (row, &s) in rows.iter_mut().zip(col) {
                row.push(s);
            }
        }
        Self::from_rows(risk_ids, start.sequence(columns.len()), &rows)
    }

    pub fn risk_ids(&self) -> &[String] {
        &self.risk_ids
    }

    pub fn months(&self) -> &[Month] {
        &self.months
    }

    pub fn risk_count(&self) -> usize {
        self.risk_ids.len()
    }

    pub fn month_count(&self) -> usize {
        self.months.len()
    }

    pub fn cell_count(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, risk: usize, t: usize) -> bool {
        self.states[risk * self.months.len() + t]
    }

    pub fn set_state(&mut self, risk: usize, t: usize, active: bool) {
        let t_len = self.months.len();
        self.states[risk * t_len + t] = active;
    }

    pub fn row(&self, risk: usize) -> &[bool] {
        let t = self.months.len();
        &self.states[risk * t..(risk + 1) * t]
    }

    pub fn column(&self, t: usize) -> Vec<bool> {
        (0..self.risk_count()).map(|i| self.state(i, t)).collect()
    }

    pub fn active_months(&self, risk: usize) -> usize {
        self.row(risk).iter().filter(|&&s| s).count()
    }

    /// Total number of observed 0→1 flips.
    pub fn activation_count(&self) -> usize {
        (0..self.risk_count())
            .map(|i| self.row(i).windows(2).filter(|w| !w[0] && w[1]).count())
            .sum()
    }

    /// Total number of observed 1→0 flips.
    pub fn recovery_count(&self) -> usize {
        (0..self.risk_count())
            .map(|i| self.row(i).windows(2).filter(|w| w[0] && !w[1]).count())
            .sum()
    }

    /// Number of risks flipping 0→1 between month `t - 1` and `t`, for
    /// `t = 1..T` (first entry is for month index 1).
    pub fn activations_per_step(&self) -> Vec<usize> {
        (1..self.month_count())
            .map(|t| {
                (0..self.risk_count())
                    .filter(|&i| !self.state(i, t - 1) && self.state(i, t))
                    .count()
            })
            .collect()
    }

    /// Writes the long `month,risk_id,state` form.
    pub fn write_long_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["month", "risk_id", "state"])?;
        for (t, m) in self.months.iter().enumerate() {
            let label = m.to_string();
            for (i, id) in self.risk_ids.iter().enumerate() {
                w.write_record([label.as_str(), id.as_str(), if self.state(i, t) { "1" } else { "0" }])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the wide `month,<id1>,<id2>,...` form.
    pub fn write_wide_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["month".to_string()];
        header.extend(self.risk_ids.iter().cloned());
        w.write_record(&header)?;
        for (t, m) in self.months.iter().enumerate() {
            let mut rec = vec![m.to_string()];
            rec.extend((0..self.risk_count()).map(|i| if self.state(i, t) { "1" } else { "0" }.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_state(raw: &str, risk: &str, month: &str) -> Result<bool> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(CarpError::NonBinaryState {
            risk: risk.to_string(),
            month: month.to_string(),
            value: other.to_string(),
        }),
    }
}

fn check_contiguous(months: &[Month]) -> Result<()> {
    for w in months.windows(2) {
        if w[0].next() != w[1] {
            return Err(CarpError::MonthGap {
                before: w[0].to_string(),
                after: w[1].to_string(),
            });
        }
    }
    Ok(())
}

/// Loads a history in long (`month,risk_id,state`) or wide
/// (`month,<id>...`) form, aligned to the network's risk order.
///
/// Every network risk must have a value in every month; nothing is imputed.
pub fn load_history<R: Read>(reader: R, network: &RiskNetwork) -> Result<HistoryMatrix> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let long_form = headers.len() == 3 && headers[1] == "risk_id" && headers[2] == "state";
    if headers.first().map(String::as_str) != Some("month") {
        return Err(CarpError::InvalidMonth(
            "history header must start with `month`".to_string(),
        ));
    }

    let r = network.len();
    let index: HashMap<&str, usize> = network
        .risks
        .iter()
        .enumerate()
        .map(|(i, risk)| (risk.id.as_str(), i))
        .collect();
    let mut cells: HashMap<Month, Vec<Option<bool>>> = HashMap::new();

    if long_form {
        for rec in rdr.records() {
            let rec = rec?;
            let month_label = rec.get(0).unwrap_or_default();
            let month: Month = month_label.parse()?;
            let id = rec.get(1).unwrap_or_default();
            let &i = index
                .get(id)
                .ok_or_else(|| CarpError::UnknownRisk(id.to_string()))?;
            let state = parse_state(rec.get(2).unwrap_or_default(), id, month_label)?;
            let col = cells.entry(month).or_insert_with(|| vec![None; r]);
            if col[i].replace(state).is_some() {
                return Err(CarpError::DuplicateCell {
                    risk: id.to_string(),
                    month: month.to_string(),
                });
            }
        }
    } else {
        let mut columns = Vec::with_capacity(headers.len() - 1);
        for id in &headers[1..] {
            let &i = index
                .get(id.as_str())
                .ok_or_else(|| CarpError::UnknownRisk(id.clone()))?;
            if columns.contains(&i) {
                return Err(CarpError::DuplicateRisk(id.clone()));
            }
            columns.push(i);
        }
        for rec in rdr.records() {
            let rec = rec?;
            let month_label = rec.get(0).unwrap_or_default();
            let month: Month = month_label.parse()?;
            if cells.contains_key(&month) {
                return Err(CarpError::DuplicateCell {
                    risk: headers.get(1).cloned().unwrap_or_default(),
                    month: month.to_string(),
                });
            }
            let mut col = vec![None; r];
            for (k, &i) in columns.iter().enumerate() {
                let raw = rec.get(k + 1).unwrap_or_default();
                col[i] = Some(parse_state(raw, &headers[k + 1], month_label)?);
            }
            cells.insert(month, col);
        }
    }

    let mut months: Vec<Month> = cells.keys().copied().collect();
    months.sort_unstable();
    if months.len() < 2 {
        return Err(CarpError::HistoryTooShort(months.len()));
    }
    check_contiguous(&months)?;

    let mut rows = vec![Vec::with_capacity(months.len()); r];
    for m in &months {
        let col = &cells[m];
        for (i, cell) in col.iter().enumerate() {
            match cell {
                Some(s) => rows[i].push(*s),
                None => {
                    return Err(CarpError::MissingCell {
                        risk: network.risks[i].id.clone(),
                        month: m.to_string(),
                    })
                }
            }
        }
    }
    HistoryMatrix::from_rows(network.ids(), months, &rows)
}

pub fn load_history_file(path: &Path, network: &RiskNetwork) -> Result<HistoryMatrix> {
    load_history(std::fs::File::open(path)?, network)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk_model::catalog::{load_network, LikelihoodScale};

    fn network(n: usize) -> RiskNetwork {
        let mut cat = String::from("id,numeric_code,name,category,likelihood\n");
        for i in 0..n {
            cat.push_str(&format!("r{i},{i:02},risk {i},economic,3\n"));
        }
        load_network("2013", cat.as_bytes(), "risk_a,risk_b,count\n".as_bytes(), LikelihoodScale::default())
            .unwrap()
    }

    #[test]
    fn month_parse_and_successor() {
        let m: Month = "2012-12".parse().unwrap();
        assert_eq!(m.next().to_string(), "2013-01");
        assert!("2012-13".parse::<Month>().is_err());
        assert!("12-01".parse::<Month>().is_err());
        assert!("2012/01".parse::<Month>().is_err());
    }

    #[test]
    fn full_size_history_has_expected_cell_count() {
        let net = network(50);
        let months = Month::new(2000, 1).unwrap().sequence(156);
        let mut csv = String::from("month,risk_id,state\n");
        for m in &months {
            for i in 0..50 {
                let state = u8::from((i + m.month as usize).is_multiple_of(7));
                csv.push_str(&format!("{m},r{i},{state}\n"));
            }
        }
        let h = load_history(csv.as_bytes(), &net).unwrap();
        assert_eq!(h.cell_count(), 7_800);
        assert_eq!(h.cell_count(), 13 * 12 * 50);
        assert_eq!(h.month_count(), 156);
    }

    #[test]
    fn long_and_wide_forms_agree() {
        let net = network(3);
        let long = "month,risk_id,state\n2000-02,r0,1\n2000-01,r0,0\n2000-01,r1,1\n2000-02,r1,1\n2000-01,r2,0\n2000-02,r2,0\n";
        let wide = "month,r2,r0,r1\n2000-01,0,0,1\n2000-02,0,1,1\n";
        let a = load_history(long.as_bytes(), &net).unwrap();
        let b = load_history(wide.as_bytes(), &net).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.row(0), &[false, true]);
        assert_eq!(a.activation_count(), 1);
        let mut out = Vec::new();
        a.write_wide_csv(&mut out).unwrap();
        assert_eq!(load_history(out.as_slice(), &net).unwrap(), a);
    }

    #[test]
    fn always_passive_risk_is_valid() {
        let net = network(2);
        let wide = "month,r0,r1\n2000-01,0,1\n2000-02,0,0\n2000-03,0,1\n";
        let h = load_history(wide.as_bytes(), &net).unwrap();
        assert_eq!(h.active_months(0), 0);
    }

    #[test]
    fn rejects_gaps_bad_states_unknown_risks_and_holes() {
        let net = network(2);
        let gap = "month,r0,r1\n2000-01,0,1\n2000-03,0,0\n";
        assert!(matches!(load_history(gap.as_bytes(), &net), Err(CarpError::MonthGap { .. })));
        let nonbinary = "month,r0,r1\n2000-01,0,2\n2000-02,0,0\n";
        assert!(matches!(
            load_history(nonbinary.as_bytes(), &net),
            Err(CarpError::NonBinaryState { .. })
        ));
        let unknown = "month,risk_id,state\n2000-01,zz,1\n";
        assert!(matches!(load_history(unknown.as_bytes(), &net), Err(CarpError::UnknownRisk(_))));
        let hole = "month,risk_id,state\n2000-01,r0,1\n2000-01,r1,1\n2000-02,r0,0\n";
        assert!(matches!(load_history(hole.as_bytes(), &net), Err(CarpError::MissingCell { .. })));
        let missing_column = "month,r0\n2000-01,0\n2000-02,1\n";
        assert!(matches!(
            load_history(missing_column.as_bytes(), &net),
            Err(CarpError::MissingCell { .. })
        ));
    }

    #[test]
    fn needs_two_months() {
        let net = network(1);
        assert!(matches!(
            load_history("month,risk_id,state\n".as_bytes(), &net),
            Err(CarpError::HistoryTooShort(0))
        ));
        assert!(matches!(
            load_history("month,r0\n2000-01,1\n".as_bytes(), &net),
            Err(CarpError::HistoryTooShort(1))
        ));
    }
}
