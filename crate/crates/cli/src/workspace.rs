//! On-disk state: one directory holding the model checkpoint (which embeds
//! the inventory), the federation, the quota tree and charm definitions.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use tessera_core::charm::{parse_charm, CharmStore};
use tessera_core::{Federation, Model, ProjectTree};

use crate::CliError;

pub const MODEL_FILE: &str = "model.json";
pub const FEDERATION_FILE: &str = "federation.json";
pub const QUOTA_FILE: &str = "quota.json";
pub const CHARM_DIR: &str = "charms";
pub const LOCK_FILE: &str = ".lock";

/// Held for the lifetime of one command; a second invocation on the same
/// workspace fails instead of interleaving writes.
#[derive(Debug)]
pub struct Lock(PathBuf);

impl Lock {
    pub fn acquire(root: &Path) -> Result<Lock, CliError> {
        let path = root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Lock(path)),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Locked(root.to_path_buf())),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub model: Model,
    pub federation: Federation,
    pub quota: ProjectTree,
    pub store: CharmStore,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("workspace state always serializes");
    text.push('\n');
    text
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

impl Workspace {
    pub fn exists(root: &Path) -> bool {
        root.join(MODEL_FILE).is_file()
    }

    /// Create the layout with an empty model and a federation whose master
    /// region is `master`.
    pub fn create(root: &Path, federation: Federation, model: Model) -> Result<Workspace, CliError> {
        if Self::exists(root) {
            return Err(CliError::Usage(format!("{} is already a workspace", root.display())));
        }
        fs::create_dir_all(root.join(CHARM_DIR)).map_err(|e| CliError::io(root, e))?;
        let ws = Workspace {
            root: root.to_path_buf(),
            model,
            federation,
            quota: ProjectTree::new(),
            store: CharmStore::new(),
        };
        ws.save()?;
        Ok(ws)
    }

    pub fn load(root: &Path) -> Result<Workspace, CliError> {
        if !Self::exists(root) {
            return Err(CliError::NoWorkspace(root.to_path_buf()));
        }
        let model_path = root.join(MODEL_FILE);
        let text = fs::read_to_string(&model_path).map_err(|e| CliError::io(&model_path, e))?;
        let model = Model::restore(&text).map_err(|e| CliError::Corrupt {
            path: model_path,
            reason: e.to_string(),
        })?;
        Ok(Workspace {
            root: root.to_path_buf(),
            model,
            federation: read_json(&root.join(FEDERATION_FILE))?,
            quota: read_json(&root.join(QUOTA_FILE))?,
            store: Self::load_charms(&root.join(CHARM_DIR))?,
        })
    }

    fn load_charms(dir: &Path) -> Result<CharmStore, CliError> {
        let mut store = CharmStore::new();
        let mut files: Vec<PathBuf> = match fs::read_dir(dir) {
            Ok(entries) => entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "yaml"))
                .collect(),
            Err(e) if e.kind() == ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(CliError::io(dir, e)),
        };
        files.sort();
        for path in files {
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            store.register(parse_charm(&text)?)?;
        }
        Ok(store)
    }

    pub fn save(&self) -> Result<(), CliError> {
        write(&self.root.join(MODEL_FILE), &self.model.checkpoint())?;
        write(&self.root.join(FEDERATION_FILE), &to_json(&self.federation))?;
        write(&self.root.join(QUOTA_FILE), &to_json(&self.quota))
    }

    /// Validate and store a charm definition under `charms/<name>.yaml`.
    pub fn add_charm(&mut self, text: &str) -> Result<String, CliError> {
        let spec = parse_charm(text)?;
        let file = match &spec.owner {
            Some(owner) => format!("{}@{owner}.yaml", spec.name),
            None => format!("{}.yaml", spec.name),
        };
        let charm_ref = self.store.register(spec)?;
        write(&self.root.join(CHARM_DIR).join(file), text)?;
        Ok(charm_ref.to_string())
    }
}
