//! File-backed key material and user registry.
//!
//! ```text
//! <dir>/params.bin          ABE public parameters
//! <dir>/msk.bin             ABE master key (0600)
//! <dir>/master_secret.bin   token PRF key (0600)
//! <dir>/registry.json       username database
//! <dir>/bundles/<user>.bin  client bundles (0600)
//! ```
//!
//! Every `.bin` file has a `.hex` sidecar with the same bytes hex-encoded.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use locauth::protocol::registry::{ClientBundle, Registry};
use locauth::protocol::{Authority, ProtocolError};
use locauth::tokens::MasterSecret;
use locauth_abe::{AbeError, MasterKey, PublicParams};
use thiserror::Error;

pub const PARAMS_FILE: &str = "params.bin";
pub const MSK_FILE: &str = "msk.bin";
pub const MASTER_SECRET_FILE: &str = "master_secret.bin";
pub const REGISTRY_FILE: &str = "registry.json";
pub const BUNDLES_DIR: &str = "bundles";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Error)]
pub enum KeystoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("keystore already exists at {0} (use --force to overwrite)")]
    Exists(PathBuf),
    #[error("no keystore at {0} (run setup first)")]
    Missing(PathBuf),
    #[error("{path}: {source}")]
    Abe { path: PathBuf, source: AbeError },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("keystore {0} is locked by another process")]
    Locked(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> KeystoreError + '_ {
    move |source| KeystoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` through a temporary file and a rename.
fn write_file(path: &Path, bytes: &[u8], secret: bool) -> Result<(), KeystoreError> {
    let tmp = path.with_extension("tmp");
    let mut options = OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    if secret {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    #[cfg(not(unix))]
    let _ = secret;
    let mut file = options.open(&tmp).map_err(io_err(&tmp))?;
    file.write_all(bytes).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_binary(path: &Path, bytes: &[u8], secret: bool) -> Result<(), KeystoreError> {
    write_file(path, bytes, secret)?;
    let sidecar = format!("{}\n", hex::encode(bytes));
    write_file(&path.with_extension("hex"), sidecar.as_bytes(), secret)
}

fn read(path: &Path) -> Result<Vec<u8>, KeystoreError> {
    fs::read(path).map_err(io_err(path))
}

/// Exclusive or shared advisory lock, released on drop.
#[derive(Debug)]
pub struct KeystoreLock {
    _file: File,
}

#[derive(Clone, Debug)]
pub struct Keystore {
    dir: PathBuf,
}

impl Keystore {
    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Keystore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn registry_path(&self) -> PathBuf {
        self.path(REGISTRY_FILE)
    }

    pub fn bundle_path(&self, username: &str) -> PathBuf {
        self.dir.join(BUNDLES_DIR).join(format!("{}.bin", username))
    }

    pub fn exists(&self) -> bool {
        [PARAMS_FILE, MSK_FILE, MASTER_SECRET_FILE]
            .iter()
            .any(|f| self.path(f).exists())
    }

    /// Takes the advisory lock; fails at once if another process holds it.
    pub fn lock(&self, exclusive: bool) -> Result<KeystoreLock, KeystoreError> {
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let path = self.path(LOCK_FILE);
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)
            .map_err(io_err(&path))?;
        let taken = if exclusive {
            file.try_lock()
        } else {
            file.try_lock_shared()
        };
        match taken {
            Ok(()) => Ok(KeystoreLock { _file: file }),
            Err(fs::TryLockError::WouldBlock) => Err(KeystoreError::Locked(self.dir.clone())),
            Err(fs::TryLockError::Error(e)) => Err(io_err(&path)(e)),
        }
    }

    /// Persists a fresh authority. With `force`, an existing keystore is
    /// replaced and its registry and bundles are discarded.
    pub fn create(&self, authority: &Authority, force: bool) -> Result<(), KeystoreError> {
        if self.exists() && !force {
            return Err(KeystoreError::Exists(self.dir.clone()));
        }
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        let bundles = self.dir.join(BUNDLES_DIR);
        if bundles.exists() {
            fs::remove_dir_all(&bundles).map_err(io_err(&bundles))?;
        }
        fs::create_dir_all(&bundles).map_err(io_err(&bundles))?;
        write_binary(&self.path(PARAMS_FILE), &authority.params.to_bytes(), false)?;
        write_binary(&self.path(MSK_FILE), &authority.msk.to_bytes(), true)?;
        write_binary(&self.path(MASTER_SECRET_FILE), &authority.master_secret.0, true)?;
        self.save_registry(&Registry::new())
    }

    /// Loads and validates the authority's key material.
    pub fn load_authority(&self) -> Result<Authority, KeystoreError> {
        if !self.exists() {
            return Err(KeystoreError::Missing(self.dir.clone()));
        }
        let params_path = self.path(PARAMS_FILE);
        let params = PublicParams::from_bytes(&read(&params_path)?).map_err(|source| KeystoreError::Abe {
            path: params_path.clone(),
            source,
        })?;
        let msk_path = self.path(MSK_FILE);
        let msk = MasterKey::from_bytes(&read(&msk_path)?).map_err(|source| KeystoreError::Abe {
            path: msk_path.clone(),
            source,
        })?;
        if !msk.matches(&params) {
            return Err(KeystoreError::Invalid {
                path: msk_path,
                message: "master key does not belong to the public parameters".into(),
            });
        }
        let secret_path = self.path(MASTER_SECRET_FILE);
        let secret: [u8; 32] = read(&secret_path)?.try_into().map_err(|_| KeystoreError::Invalid {
            path: secret_path.clone(),
            message: "master secret must be 32 bytes".into(),
        })?;
        Ok(Authority {
            params,
            msk,
            master_secret: MasterSecret(secret),
        })
    }

    pub fn load_registry(&self) -> Result<Registry, KeystoreError> {
        let path = self.registry_path();
        if !path.exists() {
            return Ok(Registry::new());
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Registry::from_json(&text).map_err(|e| KeystoreError::Invalid {
            path,
            message: e.to_string(),
        })
    }

    pub fn save_registry(&self, registry: &Registry) -> Result<(), KeystoreError> {
        write_file(&self.registry_path(), registry.to_json().as_bytes(), true)
    }

    pub fn save_bundle(&self, bundle: &ClientBundle) -> Result<PathBuf, KeystoreError> {
        let path = self.bundle_path(&bundle.username);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        write_binary(&path, &bundle.to_bytes(), true)?;
        Ok(path)
    }

    pub fn load_bundle(&self, username: &str) -> Result<ClientBundle, KeystoreError> {
        let path = self.bundle_path(username);
        let bundle = ClientBundle::from_bytes(&read(&path)?).map_err(|e| KeystoreError::Invalid {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if bundle.username != username {
            return Err(KeystoreError::Invalid {
                path,
                message: format!("bundle belongs to {}", bundle.username),
            });
        }
        Ok(bundle)
    }

    /// Bundles of every registered user that has one on disk.
    pub fn load_bundles(&self, registry: &Registry) -> Result<BTreeMap<String, ClientBundle>, KeystoreError> {
        let mut out = BTreeMap::new();
        for record in registry.records() {
            if self.bundle_path(&record.username).exists() {
                out.insert(record.username.clone(), self.load_bundle(&record.username)?);
            }
        }
        Ok(out)
    }
}
