//! Instance lookup by name.
//!
//! Accepted names:
//!
//! - `example1`, the small two-row integer program;
//! - `gap:<file>:<index>`, the 1-based `index`-th problem of an OR-library file;
//! - `typed:<M>:<N>:<seed>`, a generated type-D GAP instance;
//! - `d05100`-style names (`d`, two digits of machines, then jobs), read
//!   from `<name>.txt` or from `gapd.txt` when available and generated
//!   otherwise;
//! - a path to an OR-library file (first problem).
//!
//! Files are searched as given, then in `$SLBLR_DATA_DIR`, then in `data/`,
//! each time also with a `.txt` suffix.

use super::example1::{example1, OPTIMAL_MULTIPLIERS};
use super::gap::gap_to_separable;
use super::orlib::{parse_orlib_gap, ParseOptions};
use super::{GapInstance, SeparableProblem};
use crate::error::{Error, Result};
use std::path::{Path, PathBuf};

pub const DATA_DIR_ENV: &str = "SLBLR_DATA_DIR";

/// Seed of the generated stand-ins for named type-D instances.
pub const SYNTHETIC_SEED: u64 = 1;

/// Problems of the OR-library file `gapd.txt`, in file order.
const GAPD: [&str; 6] = ["d05100", "d10100", "d20100", "d05200", "d10200", "d20200"];

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Example1,
    Gap(GapInstance),
}

impl Instance {
    pub fn problem(&self) -> Result<SeparableProblem> {
        match self {
            Instance::Example1 => Ok(example1()),
            Instance::Gap(g) => gap_to_separable(g),
        }
    }

    pub fn gap(&self) -> Option<&GapInstance> {
        match self {
            Instance::Gap(g) => Some(g),
            Instance::Example1 => None,
        }
    }

    /// Known optimal multipliers, when there are any.
    pub fn reference_multipliers(&self) -> Option<Vec<f64>> {
        match self {
            Instance::Example1 => Some(OPTIMAL_MULTIPLIERS.to_vec()),
            Instance::Gap(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Builtin,
    File {
        path: PathBuf,
        index: usize,
    },
    Synthetic {
        machines: usize,
        jobs: usize,
        seed: u64,
    },
}

impl Origin {
    pub fn describe(&self) -> String {
        match self {
            Origin::Builtin => "builtin".into(),
            Origin::File { path, index } => format!("{}#{index}", path.display()),
            Origin::Synthetic {
                machines,
                jobs,
                seed,
            } => format!("synthetic type-D {machines}x{jobs} seed {seed}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub name: String,
    pub instance: Instance,
    pub origin: Origin,
}

/// Resolves `name` with the data directory taken from the environment.
pub fn resolve(name: &str) -> Result<Resolved> {
    let dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    resolve_in(name, dir.as_deref())
}

pub fn resolve_in(name: &str, data_dir: Option<&Path>) -> Result<Resolved> {
    let resolved = |instance, origin| Resolved {
        name: name.to_string(),
        instance,
        origin,
    };
    if name == "example1" {
        return Ok(resolved(Instance::Example1, Origin::Builtin));
    }
    if let Some(rest) = name.strip_prefix("gap:") {
        let (file, index) = rest.rsplit_once(':').ok_or_else(|| {
            Error::Validation(format!("expected gap:<file>:<index>, got `{name}`"))
        })?;
        let index: usize = index.parse().ok().filter(|&i| i >= 1).ok_or_else(|| {
            Error::Validation(format!(
                "problem index must be a positive integer, got `{index}`"
            ))
        })?;
        let path = find_file(file, data_dir).ok_or_else(|| {
            Error::Io(format!(
                "instance file `{file}` not found (also searched {DATA_DIR_ENV} and data/)"
            ))
        })?;
        let gap = load(&path, index)?;
        return Ok(resolved(Instance::Gap(gap), Origin::File { path, index }));
    }
    if let Some(rest) = name.strip_prefix("typed:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let nums: Option<Vec<u64>> = parts.iter().map(|p| p.parse().ok()).collect();
        let Some([m, n, seed]) = nums.as_deref().and_then(|v| <[u64; 3]>::try_from(v).ok()) else {
            return Err(Error::Validation(format!(
                "expected typed:<M>:<N>:<seed>, got `{name}`"
            )));
        };
        let (machines, jobs) = (m as usize, n as usize);
        let gap = GapInstance::type_d(machines, jobs, seed)?;
        return Ok(resolved(
            Instance::Gap(gap),
            Origin::Synthetic {
                machines,
                jobs,
                seed,
            },
        ));
    }
    if let Some((machines, jobs)) = type_d_dimensions(name) {
        if let Some(path) = find_file(name, data_dir) {
            let gap = load(&path, 1)?;
            return Ok(resolved(
                Instance::Gap(gap),
                Origin::File { path, index: 1 },
            ));
        }
        if let Some(pos) = GAPD.iter().position(|&d| d == name) {
            if let Some(path) = find_file("gapd", data_dir) {
                let gap = load(&path, pos + 1)?;
                return Ok(resolved(
                    Instance::Gap(gap),
                    Origin::File {
                        path,
                        index: pos + 1,
                    },
                ));
            }
        }
        let gap = GapInstance::type_d(machines, jobs, SYNTHETIC_SEED)?;
        return Ok(resolved(
            Instance::Gap(gap),
            Origin::Synthetic {
                machines,
                jobs,
                seed: SYNTHETIC_SEED,
            },
        ));
    }
    if let Some(path) = find_file(name, data_dir) {
        let gap = load(&path, 1)?;
        return Ok(resolved(
            Instance::Gap(gap),
            Origin::File { path, index: 1 },
        ));
    }
    Err(Error::Validation(format!(
        "unknown instance `{name}`; expected example1, gap:<file>:<index>, typed:<M>:<N>:<seed>, a dMMNNN name or a file"
    )))
}

/// `d05100` -> (5, 100).
fn type_d_dimensions(name: &str) -> Option<(usize, usize)> {
    let digits = name.strip_prefix('d')?;
    if digits.len() < 3 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let machines: usize = digits[..2].parse().ok()?;
    let jobs: usize = digits[2..].parse().ok()?;
    (machines > 0 && jobs > 0).then_some((machines, jobs))
}

fn find_file(file: &str, data_dir: Option<&Path>) -> Option<PathBuf> {
    let mut dirs: Vec<Option<&Path>> = vec![None];
    dirs.extend(data_dir.map(Some));
    dirs.push(Some(Path::new("data")));
    for dir in dirs {
        for candidate in [file.to_string(), format!("{file}.txt")] {
            let path = match dir {
                Some(d) => d.join(&candidate),
                None => PathBuf::from(&candidate),
            };
            if path.is_file() {
                return Some(path);
            }
        }
    }
    None
}

fn load(path: &Path, index: usize) -> Result<GapInstance> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut all = parse_orlib_gap(&text, ParseOptions { lenient: true })?;
    let count = all.len();
    if index > count {
        return Err(Error::Validation(format!(
            "{} holds {count} problems, index {index} requested",
            path.display()
        )));
    }
    Ok(all.swap_remove(index - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::orlib::write_orlib_gap;

    fn scratch_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("slblr-catalog-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn builtin_and_generated_names() {
        assert_eq!(
            resolve_in("example1", None).unwrap().instance,
            Instance::Example1
        );
        let r = resolve_in("typed:3:7:9", None).unwrap();
        assert_eq!(
            r.instance,
            Instance::Gap(GapInstance::type_d(3, 7, 9).unwrap())
        );
        assert!(resolve_in("typed:3:7", None).is_err());
        assert!(resolve_in("nosuch-instance", None).is_err());
    }

    #[test]
    fn named_type_d_falls_back_to_a_generated_instance() {
        let dir = scratch_dir("empty");
        let r = resolve_in("d05100", Some(&dir)).unwrap();
        let g = r.instance.gap().unwrap();
        assert_eq!((g.machines(), g.jobs()), (5, 100));
        assert!(matches!(
            r.origin,
            Origin::Synthetic {
                seed: SYNTHETIC_SEED,
                ..
            }
        ));
        assert_eq!(type_d_dimensions("d801600"), Some((80, 1600)));
        assert_eq!(type_d_dimensions("dx"), None);
    }

    #[test]
    fn files_are_found_in_the_data_directory() {
        let dir = scratch_dir("files");
        let a = GapInstance::type_d(2, 4, 1).unwrap();
        let b = GapInstance::type_d(3, 5, 2).unwrap();
        std::fs::write(
            dir.join("gapd.txt"),
            write_orlib_gap(&[a.clone(), b.clone()]),
        )
        .unwrap();
        let r = resolve_in("gap:gapd:2", Some(&dir)).unwrap();
        assert_eq!(r.instance, Instance::Gap(b));
        // second problem of gapd.txt is d10100
        let r = resolve_in("d10100", Some(&dir)).unwrap();
        assert!(matches!(r.origin, Origin::File { index: 2, .. }));
        assert!(resolve_in("gap:gapd:3", Some(&dir)).is_err());
        assert!(resolve_in("gap:gapd:0", Some(&dir)).is_err());
        let r = resolve_in("gap:gapd:1", Some(&dir)).unwrap();
        assert_eq!(r.instance, Instance::Gap(a));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
