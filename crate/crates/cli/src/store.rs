//! On-disk state directory.
//!
//! ```text
//! params.txt        public system parameters
//! rc.state          registration-center secret and issued identities (0600)
//! directory.txt     public directory, one record per line
//! creds/<id>.cred   per-party credentials (0600)
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use mec_auth::registry::{Credentials, Directory, RegistrationCenter, Role, SystemParams};

use crate::error::CliError;

pub struct Store {
    root: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::config(format!("{}: {e}", path.display()))
}

/// Identifiers double as file names, so the CLI restricts their alphabet.
pub fn check_id(id: &str) -> Result<(), CliError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b"._-".contains(&b));
    if ok {
        Ok(())
    } else {
        Err(CliError::config(format!("identity `{id}` must use only [A-Za-z0-9._-] and not start with `.`")))
    }
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn cred_path(&self, id: &str) -> PathBuf {
        self.root.join("creds").join(format!("{id}.cred"))
    }

    fn read(&self, path: &Path) -> Result<String, CliError> {
        fs::read_to_string(path).map_err(|e| io_err(path, e))
    }

    fn write_public(&self, path: &Path, text: &str) -> Result<(), CliError> {
        fs::write(path, text).map_err(|e| io_err(path, e))
    }

    /// Writes via a temp file so a crash never leaves a half-written secret.
    fn write_secret(&self, path: &Path, text: &str, create_new: bool) -> Result<(), CliError> {
        if create_new && path.exists() {
            return Err(CliError::config(format!("{} already exists", path.display())));
        }
        let tmp = path.with_extension("tmp");
        let mut opts = OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(text.as_bytes()).and_then(|_| f.sync_all()).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))
    }

    pub fn is_initialized(&self) -> bool {
        self.path("rc.state").exists() || self.path("params.txt").exists()
    }

    pub fn init(&self, rc: &RegistrationCenter) -> Result<(), CliError> {
        if self.is_initialized() {
            return Err(CliError::config(format!("{} is already set up", self.root.display())));
        }
        fs::create_dir_all(self.root.join("creds")).map_err(|e| io_err(&self.root, e))?;
        self.write_secret(&self.path("rc.state"), &rc.to_text(), true)?;
        self.write_public(&self.path("params.txt"), &rc.params().to_text())?;
        self.write_public(&self.path("directory.txt"), "")
    }

    pub fn params(&self) -> Result<SystemParams, CliError> {
        let p = self.path("params.txt");
        if !p.exists() {
            return Err(CliError::config(format!("{} is not set up; run `mecauth setup` first", self.root.display())));
        }
        Ok(SystemParams::from_text(&self.read(&p)?)?)
    }

    pub fn registration_center(&self) -> Result<RegistrationCenter, CliError> {
        Ok(RegistrationCenter::from_text(&self.read(&self.path("rc.state"))?)?)
    }

    pub fn save_registration_center(&self, rc: &RegistrationCenter) -> Result<(), CliError> {
        self.write_secret(&self.path("rc.state"), &rc.to_text(), false)
    }

    pub fn directory(&self, params: &SystemParams) -> Result<Directory, CliError> {
        Ok(Directory::from_text(params.curve.clone(), &self.read(&self.path("directory.txt"))?)?)
    }

    pub fn save_directory(&self, dir: &Directory) -> Result<(), CliError> {
        self.write_public(&self.path("directory.txt"), &dir.to_text())
    }

    pub fn save_credentials(&self, params: &SystemParams, creds: &Credentials) -> Result<PathBuf, CliError> {
        let p = self.cred_path(&creds.id);
        self.write_secret(&p, &creds.to_text(&params.curve), true)?;
        Ok(p)
    }

    pub fn credentials(&self, params: &SystemParams, id: &str) -> Result<Credentials, CliError> {
        check_id(id)?;
        let p = self.cred_path(id);
        if !p.exists() {
            return Err(CliError::config(format!("no credentials for `{id}` in {}", self.root.display())));
        }
        Ok(Credentials::from_text(&params.curve, &self.read(&p)?)?)
    }

    /// Identities with stored credentials of the given role, sorted.
    pub fn ids_with_role(&self, params: &SystemParams, role: Role) -> Result<Vec<String>, CliError> {
        let dir = self.root.join("creds");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(id) = name.strip_suffix(".cred") else { continue };
            if self.credentials(params, id)?.role == role {
                out.push(id.to_string());
            }
        }
        out.sort();
        Ok(out)
    }

    /// Explicit identity, or the only one of its role.
    pub fn pick(&self, params: &SystemParams, id: Option<&str>, role: Role) -> Result<Credentials, CliError> {
        let creds = match id {
            Some(id) => self.credentials(params, id)?,
            None => {
                let ids = self.ids_with_role(params, role)?;
                match ids.as_slice() {
                    [only] => self.credentials(params, only)?,
                    [] => return Err(CliError::config(format!("no {role} credentials registered"))),
                    _ => return Err(CliError::config(format!("several {role} identities registered; choose one of {}", ids.join(", ")))),
                }
            }
        };
        if creds.role != role {
            return Err(CliError::config(format!("`{}` is registered as {}, not {role}", creds.id, creds.role)));
        }
        Ok(creds)
    }
}
