use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratifyBy {
    TimeOfDay,
    Distance,
    Occupancy,
}

impl fmt::Display for StratifyBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StratifyBy::TimeOfDay => "time_of_day",
            StratifyBy::Distance => "distance",
            StratifyBy::Occupancy => "occupancy",
        })
    }
}

impl FromStr for StratifyBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "time_of_day" | "time" => Ok(StratifyBy::TimeOfDay),
            "distance" => Ok(StratifyBy::Distance),
            "occupancy" => Ok(StratifyBy::Occupancy),
            _ => Err(Error::InvalidInput(format!("unknown stratification '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrataBounds {
    /// Period start hours in increasing order; the last period wraps past
    /// midnight to the first start.
    pub period_starts: Vec<f64>,
    pub period_names: Vec<String>,
    /// km; short < first ≤ medium ≤ second < long
    pub distance_km: [f64; 2],
}

impl Default for StrataBounds {
    fn default() -> Self {
        StrataBounds {
            period_starts: vec![6.0, 11.0, 14.0, 18.0, 23.0],
            period_names: ["morning", "midday", "afternoon", "evening", "night"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            distance_km: [10.0, 20.0],
        }
    }
}

impl StrataBounds {
    fn check(&self) -> Result<()> {
        let p = &self.period_starts;
        if p.is_empty() || p.len() != self.period_names.len() {
            return Err(Error::InvalidInput("each period needs a start hour and a name".into()));
        }
        if p.windows(2).any(|w| w[0] >= w[1]) || p[0] < 0.0 || p[p.len() - 1] >= 24.0 {
            return Err(Error::InvalidInput("period starts must increase within [0, 24)".into()));
        }
        if !(self.distance_km[0] < self.distance_km[1]) {
            return Err(Error::InvalidInput("distance bounds must increase".into()));
        }
        Ok(())
    }

    /// Period containing a departure time in seconds (taken modulo a day).
    pub fn period_of(&self, depart: f64) -> &str {
        let hour = depart.rem_euclid(86_400.0) / 3600.0;
        let p = &self.period_starts;
        let i = match p.iter().rposition(|&s| hour >= s) {
            Some(i) => i,
            None => p.len() - 1,
        };
        &self.period_names[i]
    }

    pub fn distance_class(&self, length_m: f64) -> &'static str {
        let km = length_m / 1000.0;
        if km < self.distance_km[0] {
            "short"
        } else if km <= self.distance_km[1] {
            "medium"
        } else {
            "long"
        }
    }

    pub fn labels(&self, by: StratifyBy) -> Vec<String> {
        let mut out: Vec<String> = match by {
            StratifyBy::TimeOfDay => {
                // night first, matching the usual reading order of a day
                let mut v = self.period_names.clone();
                v.rotate_right(1);
                v
            }
            StratifyBy::Distance => vec!["short".into(), "medium".into(), "long".into()],
            StratifyBy::Occupancy => vec!["occupied".into(), "unoccupied".into()],
        };
        out.push(UNKNOWN.into());
        out
    }

    pub fn label_of(&self, o: &Observation, by: StratifyBy) -> String {
        match by {
            StratifyBy::TimeOfDay => o.depart.map_or(UNKNOWN.into(), |d| self.period_of(d).to_string()),
            StratifyBy::Distance => self.distance_class(o.chosen_length).to_string(),
            StratifyBy::Occupancy => match o.occupied {
                Some(true) => "occupied".into(),
                Some(false) => "unoccupied".into(),
                None => UNKNOWN.into(),
            },
        }
    }
}

/// Label for observations lacking the stratifying attribute.
pub const UNKNOWN: &str = "unknown";

#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub label: String,
    pub data: Dataset,
}

/// Partition observations into strata; empty strata are kept so the
/// layout is stable.
pub fn stratify(data: &Dataset, by: StratifyBy, bounds: &StrataBounds) -> Result<Vec<Stratum>> {
    bounds.check()?;
    let labels = bounds.labels(by);
    let mut buckets: Vec<Vec<Observation>> = vec![Vec::new(); labels.len()];
    for o in &data.observations {
        let l = bounds.label_of(o, by);
        let i = labels.iter().position(|x| *x == l).expect("label from the same bounds");
        buckets[i].push(o.clone());
    }
    Ok(labels
        .into_iter()
        .zip(buckets)
        .map(|(label, observations)| Stratum {
            label,
            data: Dataset {
                observations,
                ..data.clone()
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::NodeId;
    use std::collections::BTreeMap;

    fn obs(depart: Option<f64>, km: f64, occupied: Option<bool>) -> Observation {
        Observation {
            id: 0,
            od: (NodeId(1), NodeId(2)),
            routes: vec![],
            chosen: 0,
            multiplicity: vec![],
            depart,
            occupied,
            chosen_length: km * 1000.0,
        }
    }

    #[test]
    fn periods() {
        let b = StrataBounds::default();
        assert_eq!(b.period_of(7.5 * 3600.0), "morning");
        assert_eq!(b.period_of(23.5 * 3600.0), "night");
        assert_eq!(b.period_of(3.0 * 3600.0), "night");
        assert_eq!(b.period_of(6.0 * 3600.0), "morning");
        assert_eq!(b.period_of(11.0 * 3600.0), "midday");
        assert_eq!(b.period_of(86_400.0 + 15.0 * 3600.0), "afternoon");
        assert_eq!(b.period_of(18.0 * 3600.0), "evening");
    }

    #[test]
    fn distance_classes() {
        let b = StrataBounds::default();
        assert_eq!(b.distance_class(15_000.0), "medium");
        assert_eq!(b.distance_class(9_999.0), "short");
        assert_eq!(b.distance_class(10_000.0), "medium");
        assert_eq!(b.distance_class(20_000.0), "medium");
        assert_eq!(b.distance_class(20_001.0), "long");
    }

    #[test]
    fn strata_partition_the_dataset() {
        let data = Dataset {
            feature_names: vec![],
            n_nests: 1,
            variant: None,
            units: BTreeMap::new(),
            observations: vec![
                obs(Some(3600.0), 3.0, Some(true)),
                obs(Some(8.0 * 3600.0), 12.0, Some(false)),
                obs(None, 25.0, None),
                obs(Some(19.0 * 3600.0), 1.0, Some(true)),
            ],
        };
        for by in [StratifyBy::TimeOfDay, StratifyBy::Distance, StratifyBy::Occupancy] {
            let s = stratify(&data, by, &StrataBounds::default()).unwrap();
            assert_eq!(s.iter().map(|s| s.data.observations.len()).sum::<usize>(), 4);
        }
        let occ = stratify(&data, StratifyBy::Occupancy, &StrataBounds::default()).unwrap();
        assert_eq!(occ[0].data.observations.len(), 2);
        assert_eq!(occ[2].label, UNKNOWN);
    }
}
