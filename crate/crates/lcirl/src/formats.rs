//! JSON files for scenarios, models and reports, and scenario directories.

use std::fs;
use std::path::{Path, PathBuf};

use lcirl_core::features::RewardModel;
use lcirl_core::scenario::Scenario;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{AppError, AppResult, Context};

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::Input(format!("{}: cannot serialize: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::Input(format!("{}: {e}", path.display())))
}

pub fn read_scenario(path: &Path) -> AppResult<Scenario> {
    let s: Scenario = read_json(path)?;
    s.validate().context(path.display())?;
    Ok(s)
}

/// File name for a scenario id, with anything unusual replaced by `_`.
pub fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

pub fn scenario_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{}.json", file_stem(id)))
}

pub fn write_scenario(dir: &Path, s: &Scenario) -> AppResult<PathBuf> {
    let path = scenario_path(dir, &s.id);
    write_json(&path, s)?;
    Ok(path)
}

/// Every `*.json` directly inside `dir`, as scenarios sorted by id.
pub fn load_scenario_dir(dir: &Path) -> AppResult<Vec<Scenario>> {
    let entries = fs::read_dir(dir).map_err(|e| AppError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| AppError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            paths.push(path);
        }
    }
    let mut scenarios = paths.iter().map(|p| read_scenario(p)).collect::<AppResult<Vec<_>>>()?;
    scenarios.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = scenarios.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(AppError::Input(format!("{}: scenario id {} appears twice", dir.display(), w[0].id)));
    }
    Ok(scenarios)
}

pub fn read_model(path: &Path) -> AppResult<RewardModel> {
    let m: RewardModel = read_json(path)?;
    m.validate().context(path.display())?;
    Ok(m)
}
