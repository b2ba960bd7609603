use std::io::{self, Write};

use crate::error::{Error, Result};

/// Canonical CSV column order.
pub const COLUMNS: &[&str] = &[
    "t",
    "V",
    "h",
    "gamma",
    "theta",
    "Q",
    "gamma_hat",
    "alpha_hat",
    "e_V",
    "e_h",
    "rho_V",
    "rho_h",
    "phi_V",
    "phi_h",
    "Phi_cmd",
    "delta_e_cmd",
    "Phi_eff",
    "delta_e_eff",
    "dhat_V",
    "dhat_h",
    "dhat_gamma",
    "dhat_theta",
    "dhat_Q",
    "d_V",
    "d_h",
    "d_gamma",
    "d_theta",
    "d_Q",
    "alpha",
    "V_d",
    "h_d",
    "h_hat",
    "chi_h",
    "s1",
    "s2",
    "eps_V",
    "eps_h",
    "xi_V",
    "xi_h",
    "e_gamma",
    "e_theta",
    "e_Q",
    "y1",
    "y2",
    "y3",
    "gamma_bar",
    "theta_bar",
    "Q_bar",
    "x1d",
    "x2d",
    "x3d",
    "eta1",
    "eta2",
    "eta3",
    "viol_V",
    "viol_h",
];

pub const N_COLUMNS: usize = 56;

/// Index of a named column; panics on a name outside [`COLUMNS`].
pub fn col(name: &str) -> usize {
    COLUMNS
        .iter()
        .position(|c| *c == name)
        .unwrap_or_else(|| panic!("unknown log column `{name}`"))
}

/// Uniformly sampled closed-loop trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<[f64; N_COLUMNS]>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: [f64; N_COLUMNS]) {
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let i = col(name);
        self.rows.iter().map(|r| r[i]).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", COLUMNS.join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&format_sig9(*v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyLog)?;
        if header.split(',').ne(COLUMNS.iter().copied()) {
            return Err(Error::Parse("CSV header does not match the log schema".into()));
        }
        let mut log = TrajectoryLog::default();
        for (n, line) in lines.enumerate() {
            let mut row = [0.0; N_COLUMNS];
            let mut count = 0;
            for (slot, field) in row.iter_mut().zip(line.split(',')) {
                *slot = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad number `{field}`", n + 2)))?;
                count += 1;
            }
            if count != N_COLUMNS || line.split(',').count() != N_COLUMNS {
                return Err(Error::Parse(format!("line {}: wrong field count", n + 2)));
            }
            log.push(row);
        }
        Ok(log)
    }
}

/// Plain decimal rounded to 9 significant digits.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || x.abs() < 1e-30 {
        return if x.is_finite() { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    let rounded: f64 = sci.parse().expect("float");
    let decimals = (8 - exp).max(0) as usize;
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_count() {
        assert_eq!(COLUMNS.len(), N_COLUMNS);
        assert_eq!(&COLUMNS[..19].join(", "), "t, V, h, gamma, theta, Q, gamma_hat, alpha_hat, e_V, e_h, rho_V, rho_h, phi_V, phi_h, Phi_cmd, delta_e_cmd, Phi_eff, delta_e_eff, dhat_V");
        assert_eq!(&COLUMNS[N_COLUMNS - 2..], &["viol_V", "viol_h"]);
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig9(7846.4), "7846.4");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(-123456789.87), "-123456790");
        assert_eq!(format_sig9(1.5e-7), "0.00000015");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(2.0), "2");
    }

    #[test]
    fn csv_round_trip() {
        let mut log = TrajectoryLog::default();
        let mut row = [0.0; N_COLUMNS];
        row[0] = 0.01;
        row[1] = 7846.4;
        log.push(row);
        let text = log.to_csv();
        assert!(text.starts_with("t,V,h,gamma"));
        assert_eq!(TrajectoryLog::from_csv(&text).unwrap(), log);
    }
}
