use std::path::{Path, PathBuf};

use super::format::{ModuleEntry, VioFile, VoFile};
use crate::stm::{ImportedEntry, LoadedModule, ModuleLoader};

pub const PATH_VAR: &str = "SPROVER_PATH";

/// Finds compiled modules in a list of directories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchPath {
    pub dirs: Vec<PathBuf>,
}

impl SearchPath {
    pub fn new(dirs: Vec<PathBuf>) -> SearchPath {
        SearchPath { dirs }
    }

    /// `include` first, then the directories in `SPROVER_PATH`.
    pub fn with_env(include: Vec<PathBuf>) -> SearchPath {
        let mut dirs = include;
        if let Some(var) = std::env::var_os(PATH_VAR) {
            dirs.extend(std::env::split_paths(&var).filter(|p| !p.as_os_str().is_empty()));
        }
        SearchPath { dirs }
    }

    /// A `.vo` anywhere on the path wins over a `.vio`.
    pub fn find(&self, module: &str) -> Option<PathBuf> {
        ["vo", "vio"]
            .iter()
            .find_map(|ext| self.dirs.iter().map(|d| d.join(format!("{module}.{ext}"))).find(|p| p.is_file()))
    }
}

fn imported(entry: ModuleEntry) -> ImportedEntry {
    match entry {
        ModuleEntry::Definition { name, params, body } => ImportedEntry::Definition { name, params, body },
        ModuleEntry::Axiom { name, statement } => ImportedEntry::Axiom { name, statement },
        ModuleEntry::Theorem { name, statement } => ImportedEntry::Theorem { name, statement, request: None },
    }
}

fn check_name(path: &Path, found: &str, module: &str) -> Result<(), String> {
    if found != module {
        return Err(format!("{} holds module `{found}`, not `{module}`", path.display()));
    }
    Ok(())
}

impl ModuleLoader for SearchPath {
    fn load(&self, module: &str) -> Result<LoadedModule, String> {
        let path = self.find(module).ok_or_else(|| format!("module `{module}` not found on the search path"))?;
        let is_vo = path.extension().is_some_and(|e| e == "vo");
        if is_vo {
            let vo = VoFile::read_statements(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            check_name(&path, &vo.header.module, module)?;
            let entries = vo.environment.into_iter().filter(|e| !e.imported).map(|e| imported(e.entry)).collect();
            return Ok(LoadedModule { name: module.into(), requires: vo.header.requires, entries });
        }
        let vio = VioFile::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        check_name(&path, &vio.header.module, module)?;
        let mut pending = vio.pending;
        let entries = vio
            .environment
            .into_iter()
            .filter(|e| !e.imported)
            .map(|e| {
                let mut entry = imported(e.entry);
                if let ImportedEntry::Theorem { name, request, .. } = &mut entry {
                    if let Some(i) = pending.iter().position(|p| &p.name == name) {
                        *request = Some(Box::new(pending.swap_remove(i).request));
                    }
                }
                entry
            })
            .collect();
        Ok(LoadedModule { name: module.into(), requires: vio.header.requires, entries })
    }
}
