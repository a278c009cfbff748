//! Plain-text fixtures: `key = value` configs and per-frame params CSV.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::camera::Camera;
use crate::error::InputError;
use crate::math::Vec3;
use crate::model::ExpressionParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error(transparent)]
    Input(#[from] InputError),
}

/// Parsed `key = value` lines. `#` starts a comment. Every key must be
/// consumed before [`KeyValues::finish`], so typos surface as errors.
#[derive(Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: n + 1, reason: format!("expected key = value, got `{line}`") })?;
            let key = k.trim().to_ascii_lowercase();
            if entries.insert(key.clone(), (v.trim().to_string(), n + 1)).is_some() {
                return Err(ConfigError::Syntax { line: n + 1, reason: format!("duplicate key `{key}`") });
            }
        }
        Ok(Self { entries })
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    fn parse_with<T>(&mut self, key: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.take_str(key) {
            None => Ok(None),
            Some(v) => f(&v).map(Some).map_err(|reason| ConfigError::Value { key: key.to_string(), reason }),
        }
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse_with(key, parse_real)
    }

    pub fn take_usize(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse_with(key, |s| s.parse::<usize>().map_err(|e| e.to_string()))
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parse_with(key, |s| s.parse::<u64>().map_err(|e| e.to_string()))
    }

    pub fn take_list(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.parse_with(key, |s| s.split(',').map(|t| parse_real(t.trim())).collect())
    }

    pub fn take_vec3(&mut self, key: &str) -> Result<Option<Vec3>, ConfigError> {
        self.parse_with(key, |s| {
            let v: Vec<f64> = s.split(',').map(|t| parse_real(t.trim())).collect::<Result<_, _>>()?;
            match v[..] {
                [x, y, z] => Ok(Vec3::new(x, y, z)),
                _ => Err(format!("expected 3 comma-separated reals, got {}", v.len())),
            }
        })
    }

    pub fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_keys().next() {
            Some(k) => Err(ConfigError::UnknownKey(k)),
            None => Ok(()),
        }
    }
}

fn parse_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a real number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Camera config. Either `position` (+ optional `target`, `up`) or an
/// orbit around `target` via `azimuth_deg`, `elevation_deg`, `distance`.
/// Intrinsics: `fov_deg`, `width`, `height`, `near`, `far`.
pub fn parse_camera(text: &str) -> Result<Camera, ConfigError> {
    let mut kv = KeyValues::parse(text)?;
    let target = kv.take_vec3("target")?.unwrap_or(Vec3::ZERO);
    let up = kv.take_vec3("up")?.unwrap_or(Vec3::Y);
    let fov = kv.take_f64("fov_deg")?.unwrap_or(30.0).to_radians();
    let width = kv.take_usize("width")?.unwrap_or(256) as u32;
    let height = kv.take_usize("height")?.unwrap_or(256) as u32;
    let near = kv.take_f64("near")?.unwrap_or(0.05);
    let far = kv.take_f64("far")?.unwrap_or(100.0);
    let position = match kv.take_vec3("position")? {
        Some(p) => p,
        None => {
            let az = kv.take_f64("azimuth_deg")?.unwrap_or(0.0).to_radians();
            let el = kv.take_f64("elevation_deg")?.unwrap_or(0.0).to_radians();
            let dist = kv.take_f64("distance")?.unwrap_or(4.0);
            target + Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos()) * dist
        }
    };
    kv.finish()?;
    Ok(Camera::new(position, target, up, fov, width, height, near, far)?)
}

pub fn camera_to_config(camera: &Camera) -> String {
    let v = |p: Vec3| format!("{}, {}, {}", p.x, p.y, p.z);
    format!(
        "position = {}\ntarget = {}\nup = {}\nfov_deg = {}\nwidth = {}\nheight = {}\nnear = {}\nfar = {}\n",
        v(camera.position()),
        v(camera.target()),
        v(camera.up()),
        camera.fov_y().to_degrees(),
        camera.width(),
        camera.height(),
        camera.near(),
        camera.far()
    )
}

/// One frame per non-empty line, comma-separated reals. Values are read at
/// 32-bit wire precision so offline and streamed renders see identical
/// inputs.
pub fn parse_params_csv(text: &str, expected: Option<usize>) -> Result<Vec<ExpressionParams>, ConfigError> {
    let mut frames = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f32> = line
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f32>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ConfigError::Syntax { line: n + 1, reason: format!("`{t}` is not a finite real") })
            })
            .collect::<Result<_, _>>()?;
        if let Some(p) = expected {
            if values.len() != p {
                return Err(ConfigError::Syntax {
                    line: n + 1,
                    reason: format!("expected {p} parameters, got {}", values.len()),
                });
            }
        }
        frames.push(ExpressionParams::from_f32(&values)?);
    }
    Ok(frames)
}

pub fn params_to_csv(frames: &[ExpressionParams]) -> String {
    let mut out = String::new();
    for f in frames {
        let row: Vec<String> = f.to_f32().iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_errors() {
        let mut kv = KeyValues::parse("a = 1\nb = 2 # note\n").unwrap();
        assert_eq!(kv.take_f64("a").unwrap(), Some(1.0));
        assert!(matches!(kv.finish(), Err(ConfigError::UnknownKey(k)) if k == "b"));
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        assert!(KeyValues::parse("a = 1\na = 2").is_err());
        assert!(KeyValues::parse("just text").is_err());
    }

    #[test]
    fn camera_round_trips_through_config() {
        let cam = parse_camera("azimuth_deg = 30\nelevation_deg = 10\ndistance = 3\nwidth = 32\nheight = 16\n").unwrap();
        let again = parse_camera(&camera_to_config(&cam)).unwrap();
        assert!((again.position() - cam.position()).length() < 1e-9);
        assert_eq!(again.width(), 32);
        assert_eq!(again.height(), 16);
    }

    #[test]
    fn params_csv_round_trip_and_width_check() {
        let frames = vec![
            ExpressionParams::new(vec![0.1, -2.5, 3.0]).unwrap(),
            ExpressionParams::zeros(3),
        ];
        let text = params_to_csv(&frames);
        let back = parse_params_csv(&text, Some(3)).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(&frames) {
            assert_eq!(a.to_f32(), b.to_f32());
        }
        assert!(parse_params_csv("1,2\n", Some(3)).is_err());
        assert!(parse_params_csv("1,nan,2\n", None).is_err());
    }
}
