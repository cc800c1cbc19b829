use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Indices of the last trading date of every complete calendar month.
///
/// The final month of the axis counts only if a later date exists in another month,
/// so a series ending mid-month does not produce a spurious month-end.
pub fn month_ends(dates: &[NaiveDate]) -> Vec<usize> {
    (0..dates.len().saturating_sub(1))
        .filter(|&i| {
            let (a, b) = (dates[i], dates[i + 1]);
            (a.year(), a.month()) != (b.year(), b.month())
        })
        .collect()
}

/// Every `every`-th month-end index at or after `first_allowed`, starting with the
/// first eligible one.
pub fn rebalance_schedule(dates: &[NaiveDate], first_allowed: usize, every: usize) -> Vec<usize> {
    month_ends(dates)
        .into_iter()
        .filter(|&i| i >= first_allowed)
        .step_by(every.max(1))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    /// ISO weeks.
    #[default]
    Weekly,
    Monthly,
}

impl Frequency {
    pub fn periods_per_year(self) -> f64 {
        match self {
            Frequency::Weekly => 52.0,
            Frequency::Monthly => 12.0,
        }
    }

    fn key(self, d: NaiveDate) -> (i32, u32) {
        match self {
            Frequency::Weekly => {
                let w = d.iso_week();
                (w.year(), w.week())
            }
            Frequency::Monthly => (d.year(), d.month()),
        }
    }
}

/// Compounds daily returns into periods; each period is labelled by its last date.
pub fn compound_by_period(dates: &[NaiveDate], daily: &[f64], freq: Frequency) -> (Vec<NaiveDate>, Vec<f64>) {
    let mut out_dates = Vec::new();
    let mut out = Vec::new();
    let mut i = 0;
    while i < dates.len() {
        let key = freq.key(dates[i]);
        let mut growth = 1.0;
        let mut j = i;
        while j < dates.len() && freq.key(dates[j]) == key {
            growth *= 1.0 + daily[j];
            j += 1;
        }
        out_dates.push(dates[j - 1]);
        out.push(growth - 1.0);
        i = j;
    }
    (out_dates, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::business_days;

    #[test]
    fn month_ends_on_business_calendar() {
        let days = business_days(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), 60);
        let ends: Vec<NaiveDate> = month_ends(&days).into_iter().map(|i| days[i]).collect();
        assert_eq!(
            ends,
            vec![
                NaiveDate::from_ymd_opt(2024, 1, 31).unwrap(),
                NaiveDate::from_ymd_opt(2024, 2, 29).unwrap(),
            ]
        );
    }

    #[test]
    fn every_other_month() {
        let days = business_days(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), 260);
        let s = rebalance_schedule(&days, 30, 2);
        let months: Vec<u32> = s.iter().map(|&i| days[i].month()).collect();
        assert_eq!(months, vec![2, 4, 6, 8, 10]);
    }

    #[test]
    fn weekly_compounding() {
        let days = business_days(NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), 7);
        let r = vec![0.1, 0.0, 0.0, 0.0, -0.5, 0.2, 0.0];
        let (d, w) = compound_by_period(&days, &r, Frequency::Weekly);
        assert_eq!(
            d,
            vec![
                NaiveDate::from_ymd_opt(2024, 1, 5).unwrap(),
                NaiveDate::from_ymd_opt(2024, 1, 9).unwrap()
            ]
        );
        assert!((w[0] - (1.1 * 0.5 - 1.0)).abs() < 1e-15);
        assert!((w[1] - 0.2).abs() < 1e-15);
    }
}
