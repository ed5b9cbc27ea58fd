//! Keys on disk: one `<id>.key.json` per principal plus `registry.json`, the
//! certificates a verifier trusts.

use std::fs;
use std::path::{Path, PathBuf};

use accjs_core::crypto::{keygen, CertRecord, Principal, Registry, Role};
use accjs_core::encoding::base64_bytes;
use accjs_core::time::Timestamp;
use rand_core::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::Error;

pub const REGISTRY_FILE: &str = "registry.json";

#[derive(Serialize, Deserialize)]
struct KeyFile {
    id: String,
    role: Role,
    common_name: String,
    #[serde(with = "base64_bytes")]
    secret: [u8; 32],
    cert: CertRecord,
}

#[derive(Debug, Clone)]
pub struct KeyStore {
    dir: PathBuf,
}

fn check_id(id: &str) -> Result<(), Error> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::Format(format!("invalid key id `{id}`")))
    }
}

impl KeyStore {
    /// Uses `dir`, creating it when missing.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, Error> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn key_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.key.json"))
    }

    /// Creates a key and certificate for `id` and trusts the certificate.
    pub fn generate<R: RngCore + CryptoRng>(
        &self,
        id: &str,
        role: Role,
        common_name: &str,
        validity: u64,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<CertRecord, Error> {
        check_id(id)?;
        if self.key_path(id).exists() {
            return Err(Error::Format(format!("key `{id}` already exists")));
        }
        let (p, cert) = keygen(id, role, common_name, validity, now, rng)?;
        if self.registry()?.get(&cert.cert_id).is_some() {
            return Err(Error::Format(format!("certificate {} is already in the registry", cert.cert_id)));
        }
        self.insert(&p, &cert)?;
        Ok(cert)
    }

    /// Stores a principal's key and adds its certificate to the registry.
    pub fn insert(&self, p: &Principal, cert: &CertRecord) -> Result<(), Error> {
        check_id(&p.id)?;
        let kf = KeyFile {
            id: p.id.clone(),
            role: p.role,
            common_name: p.common_name.clone(),
            secret: p.secret_bytes(),
            cert: cert.clone(),
        };
        let path = self.key_path(&p.id);
        write_private(&path, serde_json::to_string_pretty(&kf).expect("key file serializes").as_bytes())?;
        let mut reg = self.registry()?;
        reg.insert(cert.clone());
        self.save_registry(&reg)
    }

    pub fn principal(&self, id: &str) -> Result<(Principal, CertRecord), Error> {
        check_id(id)?;
        let path = self.key_path(id);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let kf: KeyFile = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let p = Principal::from_secret(&kf.id, kf.role, &kf.common_name, kf.secret);
        if p.cert_id != kf.cert.cert_id || p.public_key() != kf.cert.public_key {
            return Err(Error::Format(format!("{}: certificate does not match the key", path.display())));
        }
        Ok((p, kf.cert))
    }

    /// The id of the stored key whose certificate is `cert_id`.
    pub fn id_for_cert(&self, cert_id: &str) -> Result<Option<String>, Error> {
        let entries = fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".key.json")).map(str::to_string))
            .collect();
        ids.sort();
        for id in ids {
            if let Ok((_, cert)) = self.principal(&id) {
                if cert.cert_id == cert_id {
                    return Ok(Some(id));
                }
            }
        }
        Ok(None)
    }

    /// The trusted certificates; empty when no registry file exists yet.
    pub fn registry(&self) -> Result<Registry, Error> {
        read_registry(&self.dir.join(REGISTRY_FILE))
    }

    pub fn save_registry(&self, reg: &Registry) -> Result<(), Error> {
        let path = self.dir.join(REGISTRY_FILE);
        let text = serde_json::to_string_pretty(reg).expect("registry serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn read_registry(path: &Path) -> Result<Registry, Error> {
    match fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Registry::new()),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn write_private(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    use std::io::Write;
    let mut f = opts.open(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
