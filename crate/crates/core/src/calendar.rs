//! UTC day and month bucketing of block timestamps.

use chrono::{DateTime, Datelike, NaiveDate};

/// `YYYY-MM-DD` of a unix timestamp, in UTC.
pub fn day_label(ts: i64) -> String {
    match DateTime::from_timestamp(ts, 0) {
        Some(t) => t.format("%Y-%m-%d").to_string(),
        None => "invalid".to_string(),
    }
}

/// Calendar month of a timestamp as `(year, month)`.
pub fn month_of(ts: i64) -> (i32, u32) {
    DateTime::from_timestamp(ts, 0)
        .map(|t| (t.year(), t.month()))
        .unwrap_or((1970, 1))
}

pub fn month_label((y, m): (i32, u32)) -> String {
    format!("{y:04}-{m:02}")
}

pub fn parse_month(s: &str) -> Option<(i32, u32)> {
    let (y, m) = s.trim().split_once('-')?;
    let y: i32 = y.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    (1..=12).contains(&m).then_some((y, m))
}

/// Unix timestamp of midnight UTC on `YYYY-MM-DD`.
pub fn parse_date(s: &str) -> Option<i64> {
    let d = NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()?;
    Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp())
}

/// First second of the month.
pub fn month_start((y, m): (i32, u32)) -> i64 {
    NaiveDate::from_ymd_opt(y, m, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|d| d.and_utc().timestamp())
        .unwrap_or(0)
}

pub fn next_month((y, m): (i32, u32)) -> (i32, u32) {
    if m == 12 {
        (y + 1, 1)
    } else {
        (y, m + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zcash_genesis_bucket() {
        assert_eq!(day_label(1_477_641_360), "2016-10-28");
        assert_eq!(month_of(1_477_641_360), (2016, 10));
        assert_eq!(month_label((2017, 5)), "2017-05");
        assert_eq!(parse_month("2017-12"), Some((2017, 12)));
        assert_eq!(parse_month("2017-13"), None);
        let start = month_start((2017, 6));
        assert_eq!(day_label(start), "2017-06-01");
        assert_eq!(month_of(start - 1), (2017, 5));
        assert_eq!(parse_date("2017-05-16").map(day_label).as_deref(), Some("2017-05-16"));
        assert_eq!(next_month((2017, 12)), (2018, 1));
    }
}
