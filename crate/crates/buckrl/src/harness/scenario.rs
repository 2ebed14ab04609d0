//! Evaluation scenarios: a circuit plus a CPL step schedule.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::sim::ConverterParams;

/// A named disturbance scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub circuit: ConverterParams,
    /// (time, watts), strictly increasing times starting at 0.
    pub cpl_schedule: Vec<(f64, f64)>,
    pub duration: f64,
}

impl Scenario {
    /// 300 W -> 500 W at 0.08 s -> 300 W at 0.14 s over 0.2 s.
    pub fn builtin_a() -> Scenario {
        Scenario {
            name: "A".into(),
            circuit: ConverterParams::nominal().with_p_cpl(300.0),
            cpl_schedule: vec![(0.0, 300.0), (0.08, 500.0), (0.14, 300.0)],
            duration: 0.2,
        }
    }

    /// 300 W -> 900 W at 0.08 s -> 300 W at 0.14 s over 0.2 s.
    pub fn builtin_b() -> Scenario {
        Scenario {
            name: "B".into(),
            circuit: ConverterParams::nominal().with_p_cpl(300.0),
            cpl_schedule: vec![(0.0, 300.0), (0.08, 900.0), (0.14, 300.0)],
            duration: 0.2,
        }
    }

    /// Resolve "A", "B" (case-insensitive) or a scenario file path.
    pub fn resolve(spec: &str) -> Result<Scenario> {
        match spec {
            "A" | "a" => Ok(Self::builtin_a()),
            "B" | "b" => Ok(Self::builtin_b()),
            path => Self::from_file(path),
        }
    }

    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Scenario> {
        let text = std::fs::read_to_string(&path).map_err(|e| {
            Error::Scenario(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        let file: ScenarioFile = toml::from_str(&text)
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.as_ref().display())))?;
        let mut circuit = ConverterParams::nominal();
        if let Some(c) = file.circuit {
            c.apply(&mut circuit);
        }
        if let Some(p0) = file.scenario.schedule.first().map(|s| s[1]) {
            circuit.p_cpl = p0;
        }
        let scenario = Scenario {
            name: file.scenario.name,
            circuit,
            cpl_schedule: file.scenario.schedule.iter().map(|s| (s[0], s[1])).collect(),
            duration: file.scenario.duration,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.circuit.validate()?;
        if !(self.duration > 0.0) {
            return Err(Error::Scenario("duration must be > 0".into()));
        }
        if self.cpl_schedule.is_empty() {
            return Err(Error::Scenario("schedule must not be empty".into()));
        }
        if self.cpl_schedule[0].0 != 0.0 {
            return Err(Error::Scenario("schedule must start at t = 0".into()));
        }
        let mut prev = -1.0;
        for &(t, p) in &self.cpl_schedule {
            if t <= prev {
                return Err(Error::Scenario(format!("schedule times must strictly increase at t={t}")));
            }
            if t >= self.duration {
                return Err(Error::Scenario(format!(
                    "schedule time {t} not within [0, duration={})",
                    self.duration
                )));
            }
            if p < 0.0 {
                return Err(Error::Scenario(format!("negative load {p}")));
            }
            prev = t;
        }
        Ok(())
    }

    /// The disturbance edges: schedule change times after t = 0. Falls back
    /// to the initial instant when the schedule never changes.
    pub fn disturbance_edges(&self) -> Vec<f64> {
        let edges: Vec<f64> = self.cpl_schedule.iter().skip(1).map(|&(t, _)| t).collect();
        if edges.is_empty() {
            vec![0.0]
        } else {
            edges
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: ScenarioSection,
    circuit: Option<CircuitOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    name: String,
    duration: f64,
    /// [[time, watts], ...]
    schedule: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CircuitOverride {
    pub v_in: Option<f64>,
    pub v_ref: Option<f64>,
    pub l: Option<f64>,
    pub c: Option<f64>,
    pub r: Option<f64>,
    pub p_cpl: Option<f64>,
    pub f_sw: Option<f64>,
    pub v_min: Option<f64>,
}

impl CircuitOverride {
    pub(crate) fn apply(&self, params: &mut ConverterParams) {
        if let Some(v) = self.v_in {
            params.v_in = v;
        }
        if let Some(v) = self.v_ref {
            params.v_ref = v;
        }
        if let Some(v) = self.l {
            params.l_henry = v;
        }
        if let Some(v) = self.c {
            params.c_farad = v;
        }
        if let Some(v) = self.r {
            params.r_ohm = Some(v);
        }
        if let Some(v) = self.p_cpl {
            params.p_cpl = v;
        }
        if let Some(v) = self.f_sw {
            params.f_sw = v;
        }
        if let Some(v) = self.v_min {
            params.v_min = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_match_the_power_variation_tests() {
        let a = Scenario::builtin_a();
        assert_eq!(a.cpl_schedule, vec![(0.0, 300.0), (0.08, 500.0), (0.14, 300.0)]);
        assert_eq!(a.duration, 0.2);
        assert_eq!(a.disturbance_edges(), vec![0.08, 0.14]);
        let b = Scenario::builtin_b();
        assert_eq!(b.cpl_schedule[1], (0.08, 900.0));
        a.validate().unwrap();
        b.validate().unwrap();
    }

    #[test]
    fn degenerate_schedule_uses_initial_instant() {
        let s = Scenario {
            name: "const".into(),
            circuit: ConverterParams::nominal(),
            cpl_schedule: vec![(0.0, 300.0)],
            duration: 0.1,
        };
        assert_eq!(s.disturbance_edges(), vec![0.0]);
    }

    #[test]
    fn validation_rejects_bad_schedules() {
        let mut s = Scenario::builtin_a();
        s.cpl_schedule[2].0 = 0.08;
        assert!(s.validate().is_err());
        let mut s = Scenario::builtin_a();
        s.cpl_schedule[2].0 = 0.3;
        assert!(s.validate().is_err());
        let mut s = Scenario::builtin_a();
        s.cpl_schedule[0].0 = 0.01;
        assert!(s.validate().is_err());
    }

    #[test]
    fn scenario_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scen.toml");
        std::fs::write(
            &path,
            r#"
[scenario]
name = "custom"
duration = 0.1
schedule = [[0.0, 300.0], [0.05, 600.0]]

[circuit]
r = 50.0
"#,
        )
        .unwrap();
        let s = Scenario::from_file(&path).unwrap();
        assert_eq!(s.name, "custom");
        assert_eq!(s.cpl_schedule, vec![(0.0, 300.0), (0.05, 600.0)]);
        assert_eq!(s.circuit.r_ohm, Some(50.0));
        assert_eq!(s.circuit.p_cpl, 300.0);

        std::fs::write(&path, "[scenario]\nname = \"x\"\nduration = 0.1\nschedule = [[0.0, 300.0]]\nbogus = 1\n").unwrap();
        assert!(Scenario::from_file(&path).is_err());
    }
}
