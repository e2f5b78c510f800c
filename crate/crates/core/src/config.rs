//! `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! [source]
//! crystal_length_cm = 1
//! inverse_gvd_ps_per_cm = 2.96
//! gamma = 0.04822
//! pair_rate_hz = 24000
//! spectral_sigma_omega_rad_per_ps = 0.769   # optional, calibrated by default
//! mode = anti                               # optional: anti | positive | none
//!
//! [smf]                                     # signal leg; [dcf] is the idler leg
//! k2_s2_per_m = -2.26e-26
//! length_km = 62
//! attenuation_db_per_km = 0.2
//! group_index = 1.468
//! insertion_loss_db = 0                     # optional
//!
//! [detector_a]                              # and [detector_b]
//! efficiency = 0.5
//! jitter_fwhm_ps = 26.59
//! dark_rate_hz = 100
//! dead_time_ns = 40
//!
//! [timer_a]                                 # and [timer_b]
//! resolution_fs = 1000
//! clock_offset_fs = 0
//! site_id = 0
//!
//! [run]
//! duration_s = 5
//! seed = 1                                  # optional
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{ConfigError, Result};
use crate::model::{DispersionLeg, SourceParams, PS2_PER_S2};
use crate::sim::{CorrelationMode, DetectorSpec, Experiment, TimerSpec};

pub const SECTIONS: [&str; 8] = [
    "source",
    "smf",
    "dcf",
    "detector_a",
    "detector_b",
    "timer_a",
    "timer_b",
    "run",
];

const SOURCE_KEYS: [&str; 6] = [
    "crystal_length_cm",
    "inverse_gvd_ps_per_cm",
    "gamma",
    "pair_rate_hz",
    "spectral_sigma_omega_rad_per_ps",
    "mode",
];
const LEG_KEYS: [&str; 5] = [
    "k2_s2_per_m",
    "length_km",
    "attenuation_db_per_km",
    "group_index",
    "insertion_loss_db",
];
const DETECTOR_KEYS: [&str; 4] = [
    "efficiency",
    "jitter_fwhm_ps",
    "dark_rate_hz",
    "dead_time_ns",
];
const TIMER_KEYS: [&str; 3] = ["resolution_fs", "clock_offset_fs", "site_id"];
const RUN_KEYS: [&str; 2] = ["duration_s", "seed"];

fn known_keys(section: &str) -> &'static [&'static str] {
    match section {
        "source" => &SOURCE_KEYS,
        "smf" | "dcf" => &LEG_KEYS,
        "detector_a" | "detector_b" => &DETECTOR_KEYS,
        "timer_a" | "timer_b" => &TIMER_KEYS,
        "run" => &RUN_KEYS,
        _ => &[],
    }
}

/// A parsed configuration file: section → key → (value, line).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigDoc {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = ConfigDoc::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: format!("unterminated section header `{content}`"),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError::UnknownSection {
                        line,
                        section: name.to_string(),
                    });
                }
                if doc.sections.contains_key(name) {
                    return Err(ConfigError::Syntax {
                        line,
                        message: format!("section [{name}] repeated"),
                    });
                }
                doc.sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let section = current.as_deref().ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("key `{key}` before any section header"),
            })?;
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    message: "empty key or value".into(),
                });
            }
            if !known_keys(section).contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    section: section.to_string(),
                    key: key.to_string(),
                });
            }
            let entries = doc.sections.get_mut(section).expect("section inserted");
            if entries.contains_key(key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    section: section.to_string(),
                    key: key.to_string(),
                });
            }
            entries.insert(key.to_string(), (value.to_string(), line));
        }
        Ok(doc)
    }

    fn section<'a>(&'a self, name: &'a str) -> Result<Section<'a>, ConfigError> {
        self.sections
            .get(name)
            .map(|entries| Section { name, entries })
            .ok_or_else(|| ConfigError::MissingSection(name.to_string()))
    }
}

struct Section<'a> {
    name: &'a str,
    entries: &'a BTreeMap<String, (String, usize)>,
}

impl Section<'_> {
    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some((value, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        value
            .parse::<T>()
            .map(Some)
            .map_err(|e| ConfigError::BadValue {
                line: *line,
                key: key.to_string(),
                message: e.to_string(),
            })
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.optional(key)?.ok_or_else(|| ConfigError::MissingKey {
            section: self.name.to_string(),
            key: key.to_string(),
        })
    }

    fn finite(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.required(key)?;
        self.check_finite(key, v)
    }

    fn check_finite(&self, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ConfigError::BadValue {
                line: self.entries.get(key).map(|e| e.1).unwrap_or(0),
                key: key.to_string(),
                message: "must be finite".into(),
            })
        }
    }

    fn invalid(&self, e: crate::error::Error) -> ConfigError {
        ConfigError::Invalid {
            section: self.name.to_string(),
            message: e.to_string(),
        }
    }
}

/// Resolved experiment plus the seed, if the file pins one.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: Option<u64>,
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let doc = ConfigDoc::parse(text)?;

    let s = doc.section("source")?;
    let mut source = SourceParams {
        crystal_length_cm: s.finite("crystal_length_cm")?,
        inverse_gvd_ps_per_cm: s.finite("inverse_gvd_ps_per_cm")?,
        gamma: s.finite("gamma")?,
        pair_rate_hz: s.finite("pair_rate_hz")?,
        spectral_sigma_omega: 1.0,
    };
    source.spectral_sigma_omega = match s.optional::<f64>("spectral_sigma_omega_rad_per_ps")? {
        Some(v) => s.check_finite("spectral_sigma_omega_rad_per_ps", v)?,
        None => source.calibrated_sigma_omega(),
    };
    source.validate().map_err(|e| s.invalid(e))?;
    let mode = match s.entries.get("mode") {
        Some((v, line)) => {
            v.parse::<CorrelationMode>()
                .map_err(|message| ConfigError::BadValue {
                    line: *line,
                    key: "mode".into(),
                    message,
                })?
        }
        None => CorrelationMode::Anti,
    };

    let leg = |name: &str| -> Result<DispersionLeg, ConfigError> {
        let s = doc.section(name)?;
        let mut leg = DispersionLeg::from_si(
            s.finite("k2_s2_per_m")?,
            s.finite("length_km")?,
            s.finite("attenuation_db_per_km")?,
            s.finite("group_index")?,
        );
        if let Some(v) = s.optional::<f64>("insertion_loss_db")? {
            leg.insertion_loss_db = s.check_finite("insertion_loss_db", v)?;
        }
        leg.validate().map_err(|e| s.invalid(e))?;
        Ok(leg)
    };
    let detector = |name: &str| -> Result<DetectorSpec, ConfigError> {
        let s = doc.section(name)?;
        let det = DetectorSpec {
            efficiency: s.finite("efficiency")?,
            jitter_fwhm_ps: s.finite("jitter_fwhm_ps")?,
            dark_rate_hz: s.finite("dark_rate_hz")?,
            dead_time_ns: s.finite("dead_time_ns")?,
        };
        det.validate().map_err(|e| s.invalid(e))?;
        Ok(det)
    };
    let timer = |name: &str| -> Result<TimerSpec, ConfigError> {
        let s = doc.section(name)?;
        let t = TimerSpec {
            resolution_fs: s.required("resolution_fs")?,
            clock_offset_fs: s.required("clock_offset_fs")?,
            site_id: s.required("site_id")?,
        };
        t.validate().map_err(|e| s.invalid(e))?;
        Ok(t)
    };

    let run = doc.section("run")?;
    let experiment = Experiment {
        source,
        mode,
        smf: leg("smf")?,
        dcf: leg("dcf")?,
        detector_a: detector("detector_a")?,
        detector_b: detector("detector_b")?,
        timer_a: timer("timer_a")?,
        timer_b: timer("timer_b")?,
        duration_s: run.finite("duration_s")?,
    };
    if experiment.timer_a.site_id == experiment.timer_b.site_id {
        return Err(ConfigError::Invalid {
            section: "timer_b".into(),
            message: "both timers share a site id".into(),
        });
    }
    experiment.validate().map_err(|e| run.invalid(e))?;
    Ok(RunConfig {
        experiment,
        seed: run.optional("seed")?,
    })
}

/// The f64 closest to `target / scale` that maps back to `target` exactly
/// when multiplied by `scale`, so that written values replay bit-for-bit.
fn unscale(target: f64, scale: f64) -> f64 {
    let guess = target / scale;
    let mut candidate = guess;
    for _ in 0..8 {
        if candidate * scale == target {
            return candidate;
        }
        candidate = if candidate * scale < target {
            candidate.next_up()
        } else {
            candidate.next_down()
        };
    }
    guess
}

/// Writes a configuration that parses back to the same experiment, with
/// every parameter spelled out.
pub fn write_config(exp: &Experiment, seed: Option<u64>) -> String {
    let mut s = String::new();
    let src = &exp.source;
    let _ = writeln!(s, "[source]");
    let _ = writeln!(s, "crystal_length_cm = {:?}", src.crystal_length_cm);
    let _ = writeln!(s, "inverse_gvd_ps_per_cm = {:?}", src.inverse_gvd_ps_per_cm);
    let _ = writeln!(s, "gamma = {:?}", src.gamma);
    let _ = writeln!(s, "pair_rate_hz = {:?}", src.pair_rate_hz);
    let _ = writeln!(
        s,
        "spectral_sigma_omega_rad_per_ps = {:?}",
        src.spectral_sigma_omega
    );
    let _ = writeln!(s, "mode = {}", exp.mode);
    for (name, leg) in [("smf", &exp.smf), ("dcf", &exp.dcf)] {
        let _ = writeln!(s, "\n[{name}]");
        let _ = writeln!(
            s,
            "k2_s2_per_m = {:?}",
            unscale(leg.k2_ps2_per_m, PS2_PER_S2)
        );
        let _ = writeln!(s, "length_km = {:?}", unscale(leg.length_m, 1e3));
        let _ = writeln!(s, "attenuation_db_per_km = {:?}", leg.attenuation_db_per_km);
        let _ = writeln!(s, "group_index = {:?}", leg.group_index);
        let _ = writeln!(s, "insertion_loss_db = {:?}", leg.insertion_loss_db);
    }
    for (name, det) in [
        ("detector_a", &exp.detector_a),
        ("detector_b", &exp.detector_b),
    ] {
        let _ = writeln!(s, "\n[{name}]");
        let _ = writeln!(s, "efficiency = {:?}", det.efficiency);
        let _ = writeln!(s, "jitter_fwhm_ps = {:?}", det.jitter_fwhm_ps);
        let _ = writeln!(s, "dark_rate_hz = {:?}", det.dark_rate_hz);
        let _ = writeln!(s, "dead_time_ns = {:?}", det.dead_time_ns);
    }
    for (name, t) in [("timer_a", &exp.timer_a), ("timer_b", &exp.timer_b)] {
        let _ = writeln!(s, "\n[{name}]");
        let _ = writeln!(s, "resolution_fs = {}", t.resolution_fs);
        let _ = writeln!(s, "clock_offset_fs = {}", t.clock_offset_fs);
        let _ = writeln!(s, "site_id = {}", t.site_id);
    }
    let _ = writeln!(s, "\n[run]");
    let _ = writeln!(s, "duration_s = {:?}", exp.duration_s);
    if let Some(seed) = seed {
        let _ = writeln!(s, "seed = {seed}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Experiment {
        let mut exp = Experiment {
            smf: DispersionLeg::smf(62.0),
            dcf: DispersionLeg::dcf(7.47),
            ..Experiment::default()
        };
        exp.balance_rates(12_000.0).unwrap();
        exp
    }

    #[test]
    fn round_trip_is_exact() {
        let exp = sample();
        let text = write_config(&exp, Some(42));
        let back = parse_config(&text).unwrap();
        assert_eq!(back.experiment, exp);
        assert_eq!(back.seed, Some(42));
    }

    #[test]
    fn missing_key_is_named() {
        let text = write_config(&sample(), None).replace("gamma = 0.04822\n", "");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(
            err,
            ConfigError::MissingKey {
                section: "source".into(),
                key: "gamma".into()
            }
        );
        assert!(err.to_string().contains("gamma"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ConfigDoc::parse("[source]\ngamma = 1\nnonsense\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 3, .. }));
        let err = ConfigDoc::parse("[source]\ngamma = 1\ngamma = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateKey { line: 3, .. }));
        let err = ConfigDoc::parse("\n[sauce]\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownSection { line: 2, .. }));
        let err = ConfigDoc::parse("[run]\nspeed = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 2, .. }));
        let text = write_config(&sample(), None).replace("gamma = 0.04822", "gamma = lots");
        let err = parse_config(&text).unwrap_err();
        assert!(
            matches!(err, ConfigError::BadValue { line: 4, .. }),
            "{err}"
        );
        assert!(err.to_string().starts_with("line 4"));
    }

    #[test]
    fn comments_and_optional_keys() {
        let text = write_config(&sample(), None)
            .replace(
                "spectral_sigma_omega_rad_per_ps",
                "# spectral_sigma_omega_rad_per_ps",
            )
            .replace("mode = anti", "mode = positive   # classical");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.experiment.mode, CorrelationMode::Positive);
        assert_eq!(
            cfg.experiment.source.spectral_sigma_omega,
            cfg.experiment.source.calibrated_sigma_omega()
        );
        assert!(cfg.seed.is_none());
    }

    #[test]
    fn invalid_values_rejected() {
        let text =
            write_config(&sample(), None).replacen("efficiency = 0.5", "efficiency = 1.5", 1);
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Invalid { .. })
        ));
        let text = write_config(&sample(), None).replace("site_id = 1", "site_id = 0");
        assert!(parse_config(&text).is_err());
        let text = write_config(&sample(), None).replace("duration_s = 5.0", "duration_s = inf");
        assert!(parse_config(&text).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_text_never_panics(s in "\\PC{0,200}") {
            let _ = parse_config(&s);
        }

        #[test]
        fn unscale_round_trips(k in -1e-20f64..1e-20) {
            let ps = k * PS2_PER_S2;
            prop_assert_eq!(unscale(ps, PS2_PER_S2) * PS2_PER_S2, ps);
        }
    }
}
