//! Quarter-end calendar arithmetic.
//!
//! The quarter calendar is the ordered list of reporting dates on which
//! holdings snapshots are taken. It defaults to calendar quarter ends but any
//! strictly increasing list of dates is accepted.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar quarter (1..=4) containing `date`.
pub fn quarter_of_year(date: NaiveDate) -> u8 {
    ((date.month0() / 3) + 1) as u8
}

/// Last day of the calendar quarter containing `date`.
pub fn calendar_quarter_end(date: NaiveDate) -> NaiveDate {
    let q = quarter_of_year(date);
    let (month, day) = match q {
        1 => (3, 31),
        2 => (6, 30),
        3 => (9, 30),
        _ => (12, 31),
    };
    NaiveDate::from_ymd_opt(date.year(), month, day).expect("valid quarter end")
}

/// Calendar quarter end following `quarter_end`.
pub fn next_calendar_quarter_end(quarter_end: NaiveDate) -> NaiveDate {
    let first_of_next = calendar_quarter_end(quarter_end)
        .succ_opt()
        .expect("date in range");
    calendar_quarter_end(first_of_next)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarterCalendar {
    ends: Vec<NaiveDate>,
}

impl QuarterCalendar {
    pub fn from_dates(mut ends: Vec<NaiveDate>) -> Result<Self> {
        if ends.is_empty() {
            return Err(Error::Calendar("no quarter ends".into()));
        }
        let sorted = ends.windows(2).all(|w| w[0] < w[1]);
        if !sorted {
            ends.sort_unstable();
            if ends.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Calendar("duplicate quarter end".into()));
            }
        }
        Ok(Self { ends })
    }

    /// All calendar quarter ends from the quarter containing `start` through
    /// the quarter containing `end`.
    pub fn calendar_quarters(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Calendar(format!("{end} precedes {start}")));
        }
        let last = calendar_quarter_end(end);
        let mut q = calendar_quarter_end(start);
        let mut ends = vec![q];
        while q < last {
            q = next_calendar_quarter_end(q);
            ends.push(q);
        }
        Ok(Self { ends })
    }

    pub fn ends(&self) -> &[NaiveDate] {
        &self.ends
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.ends.binary_search(&date).is_ok()
    }

    pub fn previous(&self, date: NaiveDate) -> Option<NaiveDate> {
        let idx = self.ends.binary_search(&date).ok()?;
        idx.checked_sub(1).map(|i| self.ends[i])
    }

    pub fn next(&self, date: NaiveDate) -> Option<NaiveDate> {
        let idx = self.ends.binary_search(&date).ok()?;
        self.ends.get(idx + 1).copied()
    }

    /// Errors unless `curr` immediately follows `prev` on this calendar.
    pub fn check_consecutive(&self, prev: NaiveDate, curr: NaiveDate) -> Result<()> {
        if !self.contains(prev) {
            return Err(Error::NotInCalendar(prev));
        }
        if !self.contains(curr) {
            return Err(Error::NotInCalendar(curr));
        }
        if self.next(prev) == Some(curr) {
            Ok(())
        } else {
            Err(Error::NonConsecutive { prev, curr })
        }
    }
}
