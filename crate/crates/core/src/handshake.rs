//! Three-message mutual authentication between a mobile user and an edge
//! server.
//!
//! ```text
//! user                                              server
//!  T_u, r1; R_1 = r1 P; R_1ms = r1 P_ms
//!  TK_u = enc(SID_u) ^ pad(T_u) ^ mask(R_1ms)
//!                      -- M1 <TK_u, T_u, R_1> -->
//!                                 check T_u; R*_1ms = d_ms R_1; extract SID_u
//!                                 look up (R_u, P_u); R_ums = d_ms R_u
//!                      <-- M2 <T_ms, Auth_ms> --
//!  check T_ms; R*_ums = r_u P_ms; verify Auth_ms
//!  R_msu = d_u R_ms; Auth_u; SK
//!                      -- M3 <Auth_u> -->
//!                                 R*_msu = r_ms P_u; verify Auth_u; SK
//! ```
//!
//! Both sessions are single-owner state machines. The server side shares a
//! read-only directory and a concurrent replay cache across sessions.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rand::RngCore;
use thiserror::Error;

use crate::codec::{CodecError, M1, M2, M3};
use crate::costmodel::{OpCounter, OpCounts};
use crate::crypto::{pad32, widen32, Curve, Digest32, Point, Scalar};
use crate::registry::{Credentials, Directory, DirectoryRecord, RegistryError, Role};

/// Default freshness window in seconds.
pub const DEFAULT_DELTA_SECS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HandshakeError {
    #[error("timestamp {timestamp} outside the ±{delta}s window around {now}")]
    StaleTimestamp { timestamp: u64, now: u64, delta: u64 },
    #[error("message replayed within the freshness window")]
    Replayed,
    #[error("extracted pseudo-identity is not below the group order")]
    ScalarOutOfRange,
    #[error("pseudo-identity not found in the directory")]
    UnknownSid,
    #[error("authentication token mismatch")]
    TokenMismatch,
    #[error("message not expected in state {0}")]
    UnexpectedMessage(&'static str),
    #[error("timestamp {0} does not fit the 32-bit wire field")]
    TimestampOverflow(u64),
    #[error("peer record has role {0}, expected {1}")]
    WrongRole(Role, Role),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

impl HandshakeError {
    /// Stable short name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            HandshakeError::StaleTimestamp { .. } => "stale-timestamp",
            HandshakeError::Replayed => "replayed-message",
            HandshakeError::ScalarOutOfRange => "scalar-out-of-range",
            HandshakeError::UnknownSid => "unknown-sid",
            HandshakeError::TokenMismatch => "token-mismatch",
            HandshakeError::UnexpectedMessage(_) => "unexpected-message",
            HandshakeError::TimestampOverflow(_) => "timestamp-overflow",
            HandshakeError::WrongRole(..) => "wrong-role",
            HandshakeError::Codec(CodecError::Truncated { .. }) => "truncated-frame",
            HandshakeError::Codec(CodecError::LengthMismatch { .. }) => "length-mismatch",
            HandshakeError::Codec(CodecError::UnknownType(_)) => "unknown-type",
            HandshakeError::Codec(CodecError::MalformedPoint(_)) => "malformed-point",
        }
    }
}

/// Accept iff `|now - t| <= delta`.
pub fn validate_timestamp(t: u64, now: u64, delta: u64) -> bool {
    t.abs_diff(now) <= delta
}

fn check_fresh(t: u64, now: u64, delta: u64) -> Result<(), HandshakeError> {
    if validate_timestamp(t, now, delta) {
        Ok(())
    } else {
        Err(HandshakeError::StaleTimestamp { timestamp: t, now, delta })
    }
}

fn wire_time(now: u64) -> Result<u32, HandshakeError> {
    u32::try_from(now).map_err(|_| HandshakeError::TimestampOverflow(now))
}

/// 32-byte symmetric session key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionKey(pub Digest32);

impl SessionKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        self.0.as_bytes()
    }

    /// First four bytes as 8 hex digits; safe to display.
    pub fn fingerprint(&self) -> String {
        hex::encode(&self.0 .0[..4])
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionKey({}..)", self.fingerprint())
    }
}

fn kdf(
    counter: &mut OpCounter,
    curve: &Curve,
    sid_u: &Scalar,
    pts: [&Point; 3],
    t_u: u64,
    t_ms: u64,
) -> SessionKey {
    let sid = curve.encode_scalar(sid_u);
    let [a, b, c] = pts.map(|p| curve.encode_point(p));
    SessionKey(counter.kdf(&[&sid, &a, &b, &c, &pad32(t_u), &pad32(t_ms)]))
}

/// `H2("KDF" || enc(SID_u) || enc(pt1) || enc(pt2) || enc(pt3) || pad(T_u) || pad(T_ms))`
pub fn derive_sk(
    curve: &Curve,
    sid_u: &Scalar,
    pt1: &Point,
    pt2: &Point,
    pt3: &Point,
    t_u: u64,
    t_ms: u64,
) -> SessionKey {
    kdf(&mut OpCounter::new(), curve, sid_u, [pt1, pt2, pt3], t_u, t_ms)
}

/// `H2(SID_u || T_u || T_ms) ^ H2(SID_u || R_ums)`
fn server_token(
    counter: &mut OpCounter,
    curve: &Curve,
    sid_u: &Scalar,
    t_u: u64,
    t_ms: u64,
    r_ums: &Point,
) -> Digest32 {
    let sid = curve.encode_scalar(sid_u);
    let left = counter.h2(&[&sid, &pad32(t_u), &pad32(t_ms)]);
    let right = counter.h2(&[&sid, &curve.encode_point(r_ums)]);
    left.xor(&right)
}

/// `H2(SID_u || SID_ms || T_u || T_ms) ^ H2(SID_u || R_msu)`
fn user_token(
    counter: &mut OpCounter,
    curve: &Curve,
    sid_u: &Scalar,
    sid_ms: &Scalar,
    t_u: u64,
    t_ms: u64,
    r_msu: &Point,
) -> Digest32 {
    let sid = curve.encode_scalar(sid_u);
    let left = counter.h2(&[&sid, &curve.encode_scalar(sid_ms), &pad32(t_u), &pad32(t_ms)]);
    let right = counter.h2(&[&sid, &curve.encode_point(r_msu)]);
    left.xor(&right)
}

/// `enc(SID) ^ pad(T) ^ mask`, all widened to 32 bytes.
fn mask_identity(sid_bytes: &[u8], t: u64, mask: &Digest32) -> Digest32 {
    Digest32(widen32(sid_bytes)).xor(&Digest32(pad32(t))).xor(mask)
}

// ---- user side ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserState {
    Init,
    AwaitM2,
    Done,
    Failed,
}

impl UserState {
    fn name(self) -> &'static str {
        match self {
            UserState::Init => "Init",
            UserState::AwaitM2 => "AwaitM2",
            UserState::Done => "Done",
            UserState::Failed => "Failed",
        }
    }
}

struct UserEphemeral {
    t_u: u64,
    r_1ms: Point,
}

pub struct UserSession {
    curve: Curve,
    creds: Credentials,
    server: DirectoryRecord,
    delta: u64,
    state: UserState,
    ephemeral: Option<UserEphemeral>,
    key: Option<SessionKey>,
    error: Option<HandshakeError>,
    counter: OpCounter,
}

impl fmt::Debug for UserSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserSession")
            .field("id", &self.creds.id)
            .field("state", &self.state)
            .field("error", &self.error)
            .finish_non_exhaustive()
    }
}

impl UserSession {
    pub fn new(
        curve: Curve,
        creds: Credentials,
        server: DirectoryRecord,
        delta: u64,
    ) -> Result<Self, HandshakeError> {
        if creds.role != Role::User {
            return Err(HandshakeError::WrongRole(creds.role, Role::User));
        }
        if server.role != Role::Server {
            return Err(HandshakeError::WrongRole(server.role, Role::Server));
        }
        Ok(UserSession {
            curve,
            creds,
            server,
            delta,
            state: UserState::Init,
            ephemeral: None,
            key: None,
            error: None,
            counter: OpCounter::new(),
        })
    }

    pub fn state(&self) -> UserState {
        self.state
    }

    pub fn error(&self) -> Option<&HandshakeError> {
        self.error.as_ref()
    }

    /// Present only once the session reached `Done`.
    pub fn session_key(&self) -> Option<SessionKey> {
        self.key
    }

    pub fn op_counts(&self) -> OpCounts {
        self.counter.counts()
    }

    fn fail(&mut self, e: HandshakeError) -> HandshakeError {
        self.state = UserState::Failed;
        self.ephemeral = None;
        self.error = Some(e.clone());
        e
    }

    fn expect_state(&mut self, want: UserState) -> Result<(), HandshakeError> {
        if self.state == want {
            return Ok(());
        }
        let e = HandshakeError::UnexpectedMessage(self.state.name());
        match self.state {
            // terminal states are left untouched
            UserState::Done | UserState::Failed => Err(e),
            _ => Err(self.fail(e)),
        }
    }

    /// Fails a live session on a frame that could not be decoded.
    pub fn reject(&mut self, e: HandshakeError) -> HandshakeError {
        match self.state {
            UserState::Done | UserState::Failed => e,
            _ => self.fail(e),
        }
    }

    /// Steps 1-3: draw `r1`, stamp `T_u` and build M1.
    pub fn start<R: RngCore + ?Sized>(&mut self, rng: &mut R, now: u64) -> Result<M1, HandshakeError> {
        self.expect_state(UserState::Init)?;
        let t_u32 = wire_time(now).map_err(|e| self.fail(e))?;
        let c = self.curve.clone();
        let r1 = c.random_scalar(rng);
        let r_1 = self.counter.point_mul(&c, &r1, c.generator());
        let r_1ms = self.counter.point_mul(&c, &r1, &self.server.public_key);
        let mask = self.counter.mask32(&c, &r_1ms);
        let token = mask_identity(&c.encode_scalar(&self.creds.sid), now, &mask);
        self.ephemeral = Some(UserEphemeral { t_u: now, r_1ms });
        self.state = UserState::AwaitM2;
        Ok(M1 { token, t_u: t_u32, r1: r_1 })
    }

    /// Steps 7-9: verify the server, answer with M3 and derive the key.
    pub fn on_m2(&mut self, m2: &M2, now: u64) -> Result<(M3, SessionKey), HandshakeError> {
        self.expect_state(UserState::AwaitM2)?;
        let t_ms = u64::from(m2.t_ms);
        check_fresh(t_ms, now, self.delta).map_err(|e| self.fail(e))?;
        let c = self.curve.clone();
        let eph = self.ephemeral.take().expect("AwaitM2 carries ephemeral state");

        let r_ums = self.counter.point_mul(&c, &self.creds.secret, &self.server.public_key);
        let expected = server_token(&mut self.counter, &c, &self.creds.sid, eph.t_u, t_ms, &r_ums);
        if expected != m2.auth {
            return Err(self.fail(HandshakeError::TokenMismatch));
        }

        let r_msu = self.counter.point_mul(&c, &self.creds.private_key, &self.server.commitment);
        let auth = user_token(&mut self.counter, &c, &self.creds.sid, &self.server.sid, eph.t_u, t_ms, &r_msu);
        let key = kdf(&mut self.counter, &c, &self.creds.sid, [&eph.r_1ms, &r_ums, &r_msu], eph.t_u, t_ms);
        self.key = Some(key);
        self.state = UserState::Done;
        Ok((M3 { auth }, key))
    }
}

// ---- server side ----

/// `(SID_u, T_u)` pairs seen within the freshness window. Safe to share
/// between concurrently running server sessions.
#[derive(Debug)]
pub struct ReplayCache {
    window: u64,
    seen: Mutex<HashMap<(Vec<u8>, u64), u64>>,
}

impl ReplayCache {
    pub fn new(window: u64) -> Self {
        ReplayCache { window, seen: Mutex::new(HashMap::new()) }
    }

    /// Inserts the pair unless present. Returns `false` for a replay.
    /// Entries whose timestamp fell out of the window are evicted first.
    pub fn check_and_insert(&self, sid: &[u8], t_u: u64, now: u64) -> bool {
        let mut seen = self.seen.lock().expect("replay cache lock poisoned");
        let window = self.window;
        seen.retain(|(_, t), _| validate_timestamp(*t, now, window));
        let key = (sid.to_vec(), t_u);
        if seen.contains_key(&key) {
            return false;
        }
        seen.insert(key, now);
        true
    }

    pub fn len(&self) -> usize {
        self.seen.lock().expect("replay cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything a server needs to run sessions; cheap to clone.
#[derive(Clone)]
pub struct ServerContext {
    pub curve: Curve,
    pub creds: Arc<Credentials>,
    pub directory: Arc<Directory>,
    pub replay: Arc<ReplayCache>,
    pub delta: u64,
}

impl fmt::Debug for ServerContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServerContext")
            .field("id", &self.creds.id)
            .field("directory", &self.directory.len())
            .field("delta", &self.delta)
            .finish_non_exhaustive()
    }
}

impl ServerContext {
    pub fn new(curve: Curve, creds: Credentials, directory: Directory, delta: u64) -> Result<Self, HandshakeError> {
        if creds.role != Role::Server {
            return Err(HandshakeError::WrongRole(creds.role, Role::Server));
        }
        Ok(ServerContext {
            curve,
            creds: Arc::new(creds),
            directory: Arc::new(directory),
            replay: Arc::new(ReplayCache::new(delta)),
            delta,
        })
    }

    pub fn session(&self) -> ServerSession {
        ServerSession::new(self.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerState {
    AwaitM1,
    AwaitM3,
    Done,
    Failed,
}

impl ServerState {
    fn name(self) -> &'static str {
        match self {
            ServerState::AwaitM1 => "AwaitM1",
            ServerState::AwaitM3 => "AwaitM3",
            ServerState::Done => "Done",
            ServerState::Failed => "Failed",
        }
    }
}

struct ServerPending {
    sid_u: Scalar,
    user: DirectoryRecord,
    t_u: u64,
    t_ms: u64,
    r_1ms: Point,
    r_ums: Point,
}

pub struct ServerSession {
    ctx: ServerContext,
    state: ServerState,
    pending: Option<ServerPending>,
    peer_sid: Option<Scalar>,
    key: Option<SessionKey>,
    error: Option<HandshakeError>,
    counter: OpCounter,
}

impl fmt::Debug for ServerSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServerSession")
            .field("state", &self.state)
            .field("error", &self.error)
            .finish_non_exhaustive()
    }
}

impl ServerSession {
    pub fn new(ctx: ServerContext) -> Self {
        ServerSession {
            ctx,
            state: ServerState::AwaitM1,
            pending: None,
            peer_sid: None,
            key: None,
            error: None,
            counter: OpCounter::new(),
        }
    }

    pub fn state(&self) -> ServerState {
        self.state
    }

    pub fn error(&self) -> Option<&HandshakeError> {
        self.error.as_ref()
    }

    pub fn session_key(&self) -> Option<SessionKey> {
        self.key
    }

    /// The user pseudo-identity extracted from M1, once accepted.
    pub fn peer_sid(&self) -> Option<&Scalar> {
        self.peer_sid.as_ref()
    }

    pub fn op_counts(&self) -> OpCounts {
        self.counter.counts()
    }

    fn fail(&mut self, e: HandshakeError) -> HandshakeError {
        self.state = ServerState::Failed;
        self.pending = None;
        self.error = Some(e.clone());
        e
    }

    fn expect_state(&mut self, want: ServerState) -> Result<(), HandshakeError> {
        if self.state == want {
            return Ok(());
        }
        let e = HandshakeError::UnexpectedMessage(self.state.name());
        match self.state {
            ServerState::Done | ServerState::Failed => Err(e),
            _ => Err(self.fail(e)),
        }
    }

    /// Fails a live session on a frame that could not be decoded.
    pub fn reject(&mut self, e: HandshakeError) -> HandshakeError {
        match self.state {
            ServerState::Done | ServerState::Failed => e,
            _ => self.fail(e),
        }
    }

    /// Steps 4-6: validate, unmask `SID_u`, answer with M2.
    pub fn on_m1(&mut self, m1: &M1, now: u64) -> Result<M2, HandshakeError> {
        self.expect_state(ServerState::AwaitM1)?;
        self.process_m1(m1, now).map_err(|e| self.fail(e))
    }

    fn process_m1(&mut self, m1: &M1, now: u64) -> Result<M2, HandshakeError> {
        let ctx = self.ctx.clone();
        let c = &ctx.curve;
        let t_u = u64::from(m1.t_u);
        check_fresh(t_u, now, ctx.delta)?;
        let t_ms32 = wire_time(now)?;

        let r_1ms = self.counter.point_mul(c, &ctx.creds.private_key, &m1.r1);
        let mask = self.counter.mask32(c, &r_1ms);
        let sid_bytes = mask_identity(&[], t_u, &mask).xor(&m1.token);
        let sid_u = c.decode_scalar(sid_bytes.as_bytes()).map_err(|_| HandshakeError::ScalarOutOfRange)?;
        let user = match ctx.directory.lookup(&sid_u) {
            Ok(rec) if rec.role == Role::User => rec.clone(),
            Ok(_) | Err(RegistryError::UnknownSid) => return Err(HandshakeError::UnknownSid),
            Err(_) => return Err(HandshakeError::UnknownSid),
        };
        if !ctx.replay.check_and_insert(&c.encode_scalar(&sid_u), t_u, now) {
            return Err(HandshakeError::Replayed);
        }

        let t_ms = now;
        let r_ums = self.counter.point_mul(c, &ctx.creds.private_key, &user.commitment);
        let auth = server_token(&mut self.counter, c, &sid_u, t_u, t_ms, &r_ums);
        self.peer_sid = Some(sid_u.clone());
        self.pending = Some(ServerPending { sid_u, user, t_u, t_ms, r_1ms, r_ums });
        self.state = ServerState::AwaitM3;
        Ok(M2 { t_ms: t_ms32, auth })
    }

    /// Step 10: verify the user's token and derive the key.
    pub fn on_m3(&mut self, m3: &M3) -> Result<SessionKey, HandshakeError> {
        self.expect_state(ServerState::AwaitM3)?;
        let ctx = self.ctx.clone();
        let c = &ctx.curve;
        let p = self.pending.take().expect("AwaitM3 carries pending state");
        let r_msu = self.counter.point_mul(c, &ctx.creds.secret, &p.user.public_key);
        let expected = user_token(&mut self.counter, c, &p.sid_u, &ctx.creds.sid, p.t_u, p.t_ms, &r_msu);
        if expected != m3.auth {
            return Err(self.fail(HandshakeError::TokenMismatch));
        }
        let key = kdf(&mut self.counter, c, &p.sid_u, [&p.r_1ms, &p.r_ums, &r_msu], p.t_u, p.t_ms);
        self.key = Some(key);
        self.state = ServerState::Done;
        Ok(key)
    }
}
