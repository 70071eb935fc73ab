//! Scene sets: synthetic generation and `<root>/<scene>/<EV>.png` loading.
//!
//! A scene directory may also hold `radiance.hdr`, the reference radiance
//! used by the HDR metrics.

use std::fs;
use std::path::{Path, PathBuf};

use evhdr_core::dataset::{load_stack_dir, save_stack_dir, scene_dirs};
use evhdr_core::rgbe::{read_radiance_rgbe, write_radiance_rgbe};
use evhdr_core::synth::{simulate_stack, ForwardCrf, SyntheticScene};
use evhdr_core::{EvStep, LdrStack, RadianceMap};
use rayon::prelude::*;

use crate::error::{CliError, CliResult, Phase};

pub const RADIANCE_FILE: &str = "radiance.hdr";
pub const DEFAULT_GAMMA: f64 = 2.2;

#[derive(Clone, Debug)]
pub struct Scene {
    pub name: String,
    pub stack: LdrStack,
    pub radiance: Option<RadianceMap>,
}

impl Scene {
    pub fn named_stack(&self) -> (String, LdrStack) {
        (self.name.clone(), self.stack.clone())
    }
}

/// Seed of the `index`-th scene drawn from `seed`.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (index as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ 0x94d0_49bb
}

pub fn scene_name(prefix: &str, index: usize) -> String {
    format!("{prefix}{index:03}")
}

/// `count` random gamma-response scenes rendered and quantised at `evs`.
pub fn synthetic(
    prefix: &str,
    seed: u64,
    first_index: usize,
    count: usize,
    size: usize,
    gamma: f64,
    evs: &[EvStep],
) -> CliResult<Vec<Scene>> {
    if size == 0 || count == 0 {
        return Err(CliError::Invalid("scene count and size must be positive".into()));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(CliError::Invalid(format!("gamma must be positive, got {gamma}")));
    }
    (first_index..first_index + count)
        .into_par_iter()
        .map(|i| {
            let scene = SyntheticScene::random(scene_seed(seed, i), size, size, ForwardCrf::Gamma(gamma)).failed()?;
            let stack = simulate_stack(&scene, evs, true).failed()?;
            let radiance = scene.radiance.scaled(scene.base_exposure).failed()?;
            Ok(Scene { name: scene_name(prefix, i), stack, radiance: Some(radiance) })
        })
        .collect()
}

pub fn write_scene(root: &Path, scene: &Scene) -> CliResult<PathBuf> {
    let dir = root.join(&scene.name);
    save_stack_dir(&scene.stack, &dir).failed()?;
    if let Some(r) = &scene.radiance {
        write_radiance_rgbe(r, dir.join(RADIANCE_FILE)).failed()?;
    }
    Ok(dir)
}

/// Loads every scene under `root`. All problems are validation errors.
pub fn load(root: &Path, need_radiance: bool) -> CliResult<Vec<Scene>> {
    let dirs = scene_dirs(root).invalid()?;
    if dirs.is_empty() {
        return Err(CliError::Invalid(format!("no scene directories in {}", root.display())));
    }
    dirs.into_par_iter()
        .map(|(name, dir)| {
            let stack = load_stack_dir(&dir).invalid()?;
            let hdr = dir.join(RADIANCE_FILE);
            let radiance = if hdr.is_file() {
                Some(read_radiance_rgbe(&hdr).invalid()?)
            } else if need_radiance {
                return Err(CliError::Invalid(format!("scene {name} has no {}", hdr.display())));
            } else {
                None
            };
            Ok(Scene { name, stack, radiance })
        })
        .collect()
}

/// Rejects `path` if it exists and is not a directory.
pub fn check_output_dir(path: &Path) -> CliResult<()> {
    if path.exists() && !path.is_dir() {
        return Err(CliError::Invalid(format!("{} exists and is not a directory", path.display())));
    }
    Ok(())
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Failed(format!("cannot create {}: {e}", path.display())))
}

/// Rejects an output file whose parent directory does not exist.
pub fn check_output_file(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        return Err(CliError::Invalid(format!("{} is a directory", path.display())));
    }
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            Err(CliError::Invalid(format!("output directory does not exist: {}", p.display())))
        }
        _ => Ok(()),
    }
}
