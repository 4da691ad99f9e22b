//! Registration center: system setup, one-time enrollment of users and edge
//! servers, and the public directory distributed to both.
//!
//! Enrollment issues a Schnorr-style pseudo-identity `SID = r + d_RC * h`
//! with `h = H1(ID || enc(R))` and `R = r * P`, plus an independent key pair
//! `(d, P_pub = d * P)`. Anyone holding the directory and `P_RC` can check
//! `SID * P = R + h * P_RC`, but only given the real `ID`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use thiserror::Error;

use crate::crypto::{CryptoError, Curve, Point, Scalar};

pub const MAX_ID_LEN: usize = 255;

/// Identifiers of the hash constructions behind H1 and H2, as published.
pub const H1_ID: &str = "sha256-tag-H1-mod-q";
pub const H2_ID: &str = "sha256-tag-H2";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("identity `{0}` is already registered")]
    DuplicateId(String),
    #[error("identity must not be empty")]
    EmptyId,
    #[error("identity is {0} bytes, the limit is 255")]
    IdTooLong(usize),
    #[error("no directory record for this pseudo-identity")]
    UnknownSid,
    #[error("directory already holds a record for this pseudo-identity")]
    DuplicateSid,
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

fn parse_err(line: usize, reason: impl Into<String>) -> RegistryError {
    RegistryError::Parse { line, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    User,
    Server,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Server => "server",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "user" | "u" => Ok(Role::User),
            "server" | "ms" => Ok(Role::Server),
            other => Err(format!("unknown role `{other}` (expected user or server/ms)")),
        }
    }
}

/// Public system parameters: the curve, the hash identifiers and `P_RC`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemParams {
    pub curve: Curve,
    pub rc_public: Point,
}

impl SystemParams {
    /// Checks the enrollment identity `SID * P = R + H1(ID || enc(R)) * P_RC`.
    pub fn verify_pseudo_identity(&self, id: &str, record: &DirectoryRecord) -> bool {
        let c = &self.curve;
        let h = c.h1(&id_commitment_input(c, id, &record.commitment));
        let lhs = c.point_mul(&record.sid, c.generator());
        let rhs = c.point_add(&record.commitment, &c.point_mul(&h, &self.rc_public));
        lhs == rhs
    }

    /// `curve=<name>` and `prc=<hex>` lines.
    pub fn to_text(&self) -> String {
        format!(
            "curve={}\nprc={}\nh1={H1_ID}\nh2={H2_ID}\n",
            self.curve.name(),
            hex::encode(self.curve.encode_point(&self.rc_public))
        )
    }

    pub fn from_text(text: &str) -> Result<Self, RegistryError> {
        let mut curve = None;
        let mut prc = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| parse_err(i + 1, "expected key=value"))?;
            match k.trim() {
                "curve" => curve = Some(Curve::by_name(v.trim())?),
                "prc" => prc = Some((i + 1, decode_hex(i + 1, v.trim())?)),
                "h1" | "h2" => {}
                other => return Err(parse_err(i + 1, format!("unknown key `{other}`"))),
            }
        }
        let curve = curve.ok_or_else(|| parse_err(0, "missing curve"))?;
        let (line, prc) = prc.ok_or_else(|| parse_err(0, "missing prc"))?;
        let rc_public = curve.decode_point(&prc)?;
        if rc_public.is_identity() {
            return Err(parse_err(line, "P_RC is the identity"));
        }
        Ok(SystemParams { curve, rc_public })
    }
}

/// Private enrollment material handed to a party over the secure channel.
#[derive(Clone, PartialEq, Eq)]
pub struct Credentials {
    pub id: String,
    pub role: Role,
    pub sid: Scalar,
    /// Long-term private key `d`; `P_pub = d * P`.
    pub private_key: Scalar,
    /// Secret `r` behind the published commitment `R = r * P`.
    pub secret: Scalar,
}

impl fmt::Debug for Credentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Credentials")
            .field("id", &self.id)
            .field("role", &self.role)
            .field("sid", &self.sid)
            .field("private_key", &"<redacted>")
            .field("secret", &"<redacted>")
            .finish()
    }
}

impl Credentials {
    pub fn to_text(&self, curve: &Curve) -> String {
        format!(
            "id={}\nrole={}\nsid={}\nd={}\nr={}\n",
            hex::encode(self.id.as_bytes()),
            self.role,
            hex::encode(curve.encode_scalar(&self.sid)),
            hex::encode(curve.encode_scalar(&self.private_key)),
            hex::encode(curve.encode_scalar(&self.secret)),
        )
    }

    pub fn from_text(curve: &Curve, text: &str) -> Result<Self, RegistryError> {
        let mut fields: HashMap<&str, (usize, &str)> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| parse_err(i + 1, "expected key=value"))?;
            fields.insert(k.trim(), (i + 1, v.trim()));
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| parse_err(0, format!("missing {k}")));
        let scalar = |k: &str| -> Result<Scalar, RegistryError> {
            let (line, v) = get(k)?;
            Ok(curve.decode_scalar(&decode_hex(line, v)?)?)
        };
        let (line, id_hex) = get("id")?;
        let id = String::from_utf8(decode_hex(line, id_hex)?)
            .map_err(|_| parse_err(line, "id is not UTF-8"))?;
        let (line, role) = get("role")?;
        let role = role.parse().map_err(|e: String| parse_err(line, e))?;
        Ok(Credentials {
            id,
            role,
            sid: scalar("sid")?,
            private_key: scalar("d")?,
            secret: scalar("r")?,
        })
    }
}

/// Published triple `(SID, P_pub, R)` for one enrolled party.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectoryRecord {
    pub role: Role,
    pub sid: Scalar,
    pub public_key: Point,
    pub commitment: Point,
}

impl DirectoryRecord {
    /// `role,hex(SID),hex(enc(P_pub)),hex(enc(R))`
    pub fn to_line(&self, curve: &Curve) -> String {
        format!(
            "{},{},{},{}",
            self.role,
            hex::encode(curve.encode_scalar(&self.sid)),
            hex::encode(curve.encode_point(&self.public_key)),
            hex::encode(curve.encode_point(&self.commitment)),
        )
    }

    fn from_line(curve: &Curve, line_no: usize, line: &str) -> Result<Self, RegistryError> {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let [role, sid, public_key, commitment] = parts.as_slice() else {
            return Err(parse_err(line_no, "expected 4 comma-separated fields"));
        };
        let sid_bytes = decode_hex(line_no, sid)?;
        if sid_bytes.len() != curve.scalar_len() {
            return Err(parse_err(line_no, "SID has the wrong width"));
        }
        Ok(DirectoryRecord {
            role: role.parse().map_err(|e: String| parse_err(line_no, e))?,
            sid: curve.decode_scalar(&sid_bytes)?,
            public_key: curve.decode_point(&decode_hex(line_no, public_key)?)?,
            commitment: curve.decode_point(&decode_hex(line_no, commitment)?)?,
        })
    }
}

/// Public lookup table keyed by canonical SID encoding.
#[derive(Debug, Clone)]
pub struct Directory {
    curve: Curve,
    records: HashMap<Vec<u8>, DirectoryRecord>,
    order: Vec<Vec<u8>>,
}

impl Directory {
    pub fn new(curve: Curve) -> Self {
        Directory { curve, records: HashMap::new(), order: Vec::new() }
    }

    pub fn curve(&self) -> &Curve {
        &self.curve
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, record: DirectoryRecord) -> Result<(), RegistryError> {
        let key = self.curve.encode_scalar(&record.sid);
        if self.records.contains_key(&key) {
            return Err(RegistryError::DuplicateSid);
        }
        self.order.push(key.clone());
        self.records.insert(key, record);
        Ok(())
    }

    pub fn lookup(&self, sid: &Scalar) -> Result<&DirectoryRecord, RegistryError> {
        self.records.get(&self.curve.encode_scalar(sid)).ok_or(RegistryError::UnknownSid)
    }

    /// Records in insertion order.
    pub fn records(&self) -> impl Iterator<Item = &DirectoryRecord> {
        self.order.iter().map(|k| &self.records[k])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&r.to_line(&self.curve));
            out.push('\n');
        }
        out
    }

    pub fn from_text(curve: Curve, text: &str) -> Result<Self, RegistryError> {
        let mut dir = Directory::new(curve);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let record = DirectoryRecord::from_line(&dir.curve, i + 1, line)?;
            dir.insert(record)?;
        }
        Ok(dir)
    }
}

/// The registration center. Holds `d_RC` and the set of identities already
/// enrolled; per-party secrets are handed out and forgotten.
pub struct RegistrationCenter {
    secret: Scalar,
    params: SystemParams,
    issued: BTreeSet<String>,
}

impl fmt::Debug for RegistrationCenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegistrationCenter")
            .field("params", &self.params)
            .field("issued", &self.issued.len())
            .finish_non_exhaustive()
    }
}

/// Picks `d_RC` and publishes `P_RC = d_RC * P`.
pub fn setup<R: RngCore + ?Sized>(curve: Curve, rng: &mut R) -> (RegistrationCenter, SystemParams) {
    let secret = curve.random_scalar(rng);
    let rc_public = curve.point_mul(&secret, curve.generator());
    let params = SystemParams { curve, rc_public };
    let rc = RegistrationCenter { secret, params: params.clone(), issued: BTreeSet::new() };
    (rc, params)
}

fn id_commitment_input(curve: &Curve, id: &str, commitment: &Point) -> Vec<u8> {
    let mut buf = id.as_bytes().to_vec();
    buf.extend_from_slice(&curve.encode_point(commitment));
    buf
}

impl RegistrationCenter {
    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn is_issued(&self, id: &str) -> bool {
        self.issued.contains(id)
    }

    pub fn issued(&self) -> impl Iterator<Item = &str> {
        self.issued.iter().map(String::as_str)
    }

    /// Enrolls `id` once. Draws `r` then `d` from `rng`.
    pub fn register<R: RngCore + ?Sized>(
        &mut self,
        id: &str,
        role: Role,
        rng: &mut R,
    ) -> Result<(Credentials, DirectoryRecord), RegistryError> {
        if id.is_empty() {
            return Err(RegistryError::EmptyId);
        }
        if id.len() > MAX_ID_LEN {
            return Err(RegistryError::IdTooLong(id.len()));
        }
        if self.issued.contains(id) {
            return Err(RegistryError::DuplicateId(id.to_string()));
        }
        let c = &self.params.curve;
        let r = c.random_scalar(rng);
        let commitment = c.point_mul(&r, c.generator());
        let h = c.h1(&id_commitment_input(c, id, &commitment));
        let sid = c.scalar_add(&r, &c.scalar_mul(&self.secret, &h));
        let d = c.random_scalar(rng);
        let public_key = c.point_mul(&d, c.generator());

        self.issued.insert(id.to_string());
        let creds = Credentials { id: id.to_string(), role, sid: sid.clone(), private_key: d, secret: r };
        let record = DirectoryRecord { role, sid, public_key, commitment };
        Ok((creds, record))
    }

    /// Private state file: curve, `d_RC` and the issued identity set
    /// (hex-encoded, one per line).
    pub fn to_text(&self) -> String {
        let c = &self.params.curve;
        let mut out = format!("curve={}\ndrc={}\n", c.name(), hex::encode(c.encode_scalar(&self.secret)));
        for id in &self.issued {
            out.push_str(&format!("issued={}\n", hex::encode(id.as_bytes())));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, RegistryError> {
        let mut curve = None;
        let mut secret_hex = None;
        let mut issued = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| parse_err(i + 1, "expected key=value"))?;
            match k {
                "curve" => curve = Some(Curve::by_name(v)?),
                "drc" => secret_hex = Some((i + 1, v)),
                "issued" => {
                    let id = String::from_utf8(decode_hex(i + 1, v)?)
                        .map_err(|_| parse_err(i + 1, "issued id is not UTF-8"))?;
                    issued.insert(id);
                }
                other => return Err(parse_err(i + 1, format!("unknown key `{other}`"))),
            }
        }
        let curve = curve.ok_or_else(|| parse_err(0, "missing curve"))?;
        let (line, v) = secret_hex.ok_or_else(|| parse_err(0, "missing drc"))?;
        let secret = curve.decode_scalar(&decode_hex(line, v)?)?;
        if secret.is_zero() {
            return Err(parse_err(line, "d_RC is zero"));
        }
        let rc_public = curve.point_mul(&secret, curve.generator());
        Ok(RegistrationCenter { secret, params: SystemParams { curve, rc_public }, issued })
    }

    #[cfg(test)]
    pub(crate) fn secret(&self) -> &Scalar {
        &self.secret
    }
}

fn decode_hex(line: usize, s: &str) -> Result<Vec<u8>, RegistryError> {
    hex::decode(s).map_err(|e| parse_err(line, format!("bad hex: {e}")))
}
