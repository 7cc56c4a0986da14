//! Built-in experiments mirroring the paper's simulation figures at desk
//! scale (at most 64 antennas, 50 trials per point).

use super::config::{parse_config, ExperimentSpec};
use super::HarnessError;

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub json: &'static str,
}

const PRESETS: &[Preset] = &[
    Preset {
        name: "fig2",
        summary: "sum-rate vs rate threshold, IPRS, 64 antennas, 120 W",
        json: include_str!("../../presets/paper_fig2.json"),
    },
    Preset {
        name: "fig3",
        summary: "sum-rate vs antenna count, IPRS, 120 W",
        json: include_str!("../../presets/paper_fig3.json"),
    },
    Preset {
        name: "fig4",
        summary: "IPAO power sweep at 32 antennas, threshold 0.01",
        json: include_str!("../../presets/paper_fig4.json"),
    },
    Preset {
        name: "fig5",
        summary: "IPRS power sweep at 32 antennas, threshold 0.01",
        json: include_str!("../../presets/paper_fig5.json"),
    },
    Preset {
        name: "fig6",
        summary: "IPAO with hybrid factorization, power sweep at 64 antennas",
        json: include_str!("../../presets/paper_fig6.json"),
    },
    Preset {
        name: "fig7",
        summary: "beams-per-slot vs slot-count pairs, IPAO with hybrid factorization",
        json: include_str!("../../presets/paper_fig7.json"),
    },
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

pub fn presets() -> &'static [Preset] {
    PRESETS
}

/// Looks up a preset by short name (`fig4`) or file stem (`paper_fig4`).
pub fn preset(name: &str) -> Result<ExperimentSpec, HarnessError> {
    let short = name.strip_prefix("paper_").unwrap_or(name);
    let p = PRESETS
        .iter()
        .find(|p| p.name == short)
        .ok_or_else(|| HarnessError::UnknownPreset(name.to_string()))?;
    parse_config(p.json, &format!("preset {}", p.name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Scheme, Stage, SweepAxis, SweepValue};

    #[test]
    fn every_preset_parses() {
        for name in preset_names() {
            let spec = preset(name).unwrap();
            assert_eq!(spec.trials, 50, "{name}");
            for v in &spec.sweep_values {
                assert!(spec.config_at(v).unwrap().n_bs <= 64, "{name}");
            }
        }
    }

    #[test]
    fn fig4_matches_the_stated_setup() {
        let spec = preset("paper_fig4").unwrap();
        assert_eq!(spec.base.n_bs, 32);
        assert_eq!(spec.base.n_s, 6);
        assert_eq!(spec.base.gamma, vec![0.01; 6]);
        assert_eq!(spec.scheme, Scheme::Ipao);
        assert_eq!(spec.stage, Stage::Fdbf);
        assert_eq!(spec.sweep_axis, SweepAxis::PTot);
        assert_eq!(
            spec.sweep_values,
            vec![SweepValue::Number(80.0), SweepValue::Number(100.0), SweepValue::Number(120.0)]
        );
    }

    #[test]
    fn unknown_preset() {
        assert_eq!(preset("fig9").unwrap_err(), HarnessError::UnknownPreset("fig9".into()));
    }
}
