use std::io::{self, Write};

use crate::model::{CevModel, DriftSpec};
use crate::schemes::SchemeId;
use crate::Real;

use super::{estimate_strong_errors, ExperimentError, LadderConfig, Scale, StrongErrorReport};

/// `--id 3`: CIR (alpha = 1/2). `--id 4`: alpha in {0.6, 0.7}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableId {
    Three,
    Four,
}

impl TableId {
    pub fn from_number(n: u32) -> Option<Self> {
        match n {
            3 => Some(TableId::Three),
            4 => Some(TableId::Four),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        match self {
            TableId::Three => 3,
            TableId::Four => 4,
        }
    }

    /// `(alpha, sigma^2)` rows.
    pub fn rows(self) -> Vec<(f64, f64)> {
        match self {
            TableId::Three => [1.0, 4.0, 6.25, 9.0, 36.0]
                .iter()
                .map(|&s2| (0.5, s2))
                .collect(),
            TableId::Four => vec![
                (0.6, 49.0),
                (0.6, 53.29),
                (0.6, 144.0),
                (0.7, 64.0),
                (0.7, 81.0),
                (0.7, 225.0),
            ],
        }
    }

    /// Column labels; `None` marks comparators without an implementation here.
    pub fn columns(self) -> Vec<(&'static str, Option<SchemeId>)> {
        match self {
            TableId::Three => vec![
                ("SMS", Some(SchemeId::Sms)),
                ("AIS", Some(SchemeId::Ais)),
                ("BMS", None),
                ("MES", None),
                ("SES", Some(SchemeId::Ses)),
            ],
            TableId::Four => vec![
                ("SMS", Some(SchemeId::Sms)),
                ("BMS", None),
                ("SES", Some(SchemeId::Ses)),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableCell<T> {
    pub label: &'static str,
    /// `(rho_hat, r_squared)`, `None` for "n/a".
    pub fit: Option<(T, T)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow<T> {
    pub alpha: T,
    pub sigma2: T,
    pub cells: Vec<TableCell<T>>,
    pub reports: Vec<StrongErrorReport<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableResult<T> {
    pub id: TableId,
    pub scale: Scale,
    pub rows: Vec<TableRow<T>>,
}

impl<T: Real> TableResult<T> {
    /// `alpha,sigma2,scheme,rho_hat,r_squared`, with `n/a` for missing comparators.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "alpha,sigma2,scheme,rho_hat,r_squared")?;
        for row in &self.rows {
            for cell in &row.cells {
                match cell.fit {
                    Some((rho, r2)) => writeln!(
                        w,
                        "{},{},{},{},{}",
                        row.alpha, row.sigma2, cell.label, rho, r2
                    )?,
                    None => writeln!(w, "{},{},{},n/a,n/a", row.alpha, row.sigma2, cell.label)?,
                }
            }
        }
        Ok(())
    }
}

/// Model of the table experiments: `x0 = 1`, `T = 1`, `b(x) = 10 - 10x`.
pub fn table_model<T: Real>(alpha: f64, sigma2: f64) -> Result<CevModel<T>, ExperimentError> {
    Ok(CevModel::new(
        T::one(),
        T::lit(sigma2.sqrt()),
        T::lit(alpha),
        DriftSpec::linear(T::lit(10.0), T::lit(10.0)),
        T::one(),
    )?)
}

/// Runs every implemented cell of the table; each row shares one reference
/// path per trajectory across its schemes.
pub fn reproduce_table<T: Real>(
    id: TableId,
    scale: Scale,
    seed: u64,
) -> Result<TableResult<T>, ExperimentError> {
    let mut rows = Vec::new();
    for (alpha, sigma2) in id.rows() {
        let model = table_model::<T>(alpha, sigma2)?;
        let schemes: Vec<SchemeId> = id
            .columns()
            .iter()
            .filter_map(|c| c.1)
            .filter(|s| s.check(&model).is_ok())
            .collect();
        let cfg = LadderConfig::new(model, SchemeId::Sms, seed).with_scale(scale);
        let reports = estimate_strong_errors(&cfg, &schemes)?;
        let cells = id
            .columns()
            .into_iter()
            .map(|(label, scheme)| TableCell {
                label,
                fit: scheme
                    .and_then(|s| reports.iter().find(|r| r.scheme == s))
                    .map(|r| (r.rho_hat, r.r_squared)),
            })
            .collect();
        rows.push(TableRow {
            alpha: T::lit(alpha),
            sigma2: T::lit(sigma2),
            cells,
            reports,
        });
    }
    Ok(TableResult { id, scale, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layouts() {
        assert_eq!(TableId::Three.rows().len(), 5);
        assert_eq!(TableId::Four.rows().len(), 6);
        assert_eq!(TableId::from_number(4), Some(TableId::Four));
        assert_eq!(TableId::from_number(5), None);
        let missing: Vec<_> = TableId::Three
            .columns()
            .into_iter()
            .filter(|c| c.1.is_none())
            .map(|c| c.0)
            .collect();
        assert_eq!(missing, vec!["BMS", "MES"]);
    }

    #[test]
    fn csv_marks_missing_cells() {
        let t = TableResult::<f64> {
            id: TableId::Four,
            scale: Scale::Desk,
            rows: vec![TableRow {
                alpha: 0.7,
                sigma2: 64.0,
                cells: vec![
                    TableCell {
                        label: "SMS",
                        fit: Some((1.0, 0.999)),
                    },
                    TableCell {
                        label: "BMS",
                        fit: None,
                    },
                ],
                reports: vec![],
            }],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "alpha,sigma2,scheme,rho_hat,r_squared\n0.7,64,SMS,1,0.999\n0.7,64,BMS,n/a,n/a\n"
        );
    }
}
