//! `mecauth`: operator CLI for the MEC authentication protocol.

mod config;
mod error;
mod store;

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use mec_auth::codec::{decode_message, encode_message, read_frame, Message};
use mec_auth::costmodel::cost_report;
use mec_auth::crypto::{h2_parts, Curve};
use mec_auth::handshake::{HandshakeError, ServerContext, ServerSession, UserSession};
use mec_auth::netsim::{parse_script, run_claim_suite, run_script, Parties, SuiteConfig};
use mec_auth::registry::{setup, Role};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use config::{FileConfig, Overrides, Settings};
use error::CliError;
use store::{check_id, Store};

const DEFAULT_CURVE: &str = "secp256r1";
const DEFAULT_SUITE_SEED: u64 = 20240601;
const IO_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Parser, Debug)]
#[command(name = "mecauth", version, about = "Mutual authentication and key agreement for mobile edge computing")]
struct Cli {
    /// key = value file; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// secp256r1, secp256k1 or toy17
    #[arg(long, global = true)]
    curve: Option<String>,
    /// Timestamp tolerance in seconds
    #[arg(long, global = true)]
    delta: Option<u64>,
    /// Seed for a deterministic RNG; omit to use OS entropy
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Machine-readable output
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true)]
    state_dir: Option<PathBuf>,
    /// Freeze the clock at this Unix time
    #[arg(long, global = true)]
    now: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create the registration center and system parameters
    Setup,
    /// Enroll a user or edge server
    Register {
        /// `user` or `ms`
        role: String,
        id: String,
    },
    /// Run one handshake in-process between stored identities
    Demo {
        #[arg(long)]
        user: Option<String>,
        #[arg(long)]
        server: Option<String>,
    },
    /// Edge-server daemon
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        id: Option<String>,
        /// Exit after this many connections
        #[arg(long)]
        max_sessions: Option<usize>,
    },
    /// Run one handshake against a server
    Connect {
        #[arg(long)]
        connect: Option<String>,
        #[arg(long)]
        id: Option<String>,
    },
    /// Run the security-claim suite, or a JSON adversary script
    AttackSuite {
        /// JSON array of adversary actions, run against stored identities
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        user: Option<String>,
        #[arg(long)]
        server: Option<String>,
    },
    /// Cost tables and wire sizes
    CostReport,
}

struct Ctx {
    settings: Settings,
    json: bool,
    now: Option<u64>,
}

impl Ctx {
    fn store(&self) -> Store {
        Store::new(&self.settings.state_dir)
    }

    fn now(&self) -> u64 {
        self.now.unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
    }

    /// Independent deterministic stream per purpose when seeded.
    fn rng(&self, label: &str) -> ChaCha20Rng {
        match self.settings.seed {
            Some(seed) => {
                let d = h2_parts(&[b"CLI-RNG", label.as_bytes(), &seed.to_be_bytes()]);
                ChaCha20Rng::from_seed(d.0)
            }
            None => ChaCha20Rng::from_entropy(),
        }
    }

    fn requested_curve(&self) -> Result<Option<Curve>, CliError> {
        self.settings.curve.as_deref().map(Curve::by_name).transpose().map_err(Into::into)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let (listen, connect) = match &cli.command {
        Command::Serve { listen, .. } => (listen.clone(), None),
        Command::Connect { connect, .. } => (None, connect.clone()),
        _ => (None, None),
    };
    let settings = Settings::resolve(
        &file,
        Overrides {
            curve: cli.curve.clone(),
            delta: cli.delta,
            listen,
            connect,
            state_dir: cli.state_dir.clone(),
            seed: cli.seed,
        },
    )?;
    let ctx = Ctx { settings, json: cli.json, now: cli.now };
    match cli.command {
        Command::Setup => cmd_setup(&ctx),
        Command::Register { role, id } => cmd_register(&ctx, &role, &id),
        Command::Demo { user, server } => cmd_demo(&ctx, user.as_deref(), server.as_deref()),
        Command::Serve { id, max_sessions, .. } => cmd_serve(&ctx, id.as_deref(), max_sessions),
        Command::Connect { id, .. } => cmd_connect(&ctx, id.as_deref()),
        Command::AttackSuite { script, user, server } => match script {
            Some(path) => cmd_script(&ctx, &path, user.as_deref(), server.as_deref()),
            None => cmd_suite(&ctx),
        },
        Command::CostReport => cmd_cost_report(&ctx),
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn cmd_setup(ctx: &Ctx) -> Result<(), CliError> {
    let curve = ctx.requested_curve()?.unwrap_or(Curve::by_name(DEFAULT_CURVE)?);
    let store = ctx.store();
    let (rc, params) = setup(curve, &mut ctx.rng("setup"));
    store.init(&rc)?;
    let prc = hex::encode(params.curve.encode_point(&params.rc_public));
    if ctx.json {
        print_json(&json!({ "curve": params.curve.name(), "rc_public": prc, "state_dir": ctx.settings.state_dir }));
    } else {
        println!("curve {}", params.curve.name());
        println!("P_RC {prc}");
        eprintln!("state written to {}", ctx.settings.state_dir.display());
    }
    Ok(())
}

/// Stored parameters, checked against an explicit `--curve`.
fn load_params(ctx: &Ctx, store: &Store) -> Result<mec_auth::registry::SystemParams, CliError> {
    let params = store.params()?;
    if let Some(c) = ctx.requested_curve()? {
        if c.name() != params.curve.name() {
            return Err(CliError::config(format!(
                "--curve {} does not match the state directory curve {}",
                c.name(),
                params.curve.name()
            )));
        }
    }
    Ok(params)
}

fn parse_role(s: &str) -> Result<Role, CliError> {
    match s {
        "user" | "u" => Ok(Role::User),
        "ms" | "server" => Ok(Role::Server),
        other => Err(CliError::config(format!("unknown role `{other}`; expected `user` or `ms`"))),
    }
}

fn cmd_register(ctx: &Ctx, role: &str, id: &str) -> Result<(), CliError> {
    let role = parse_role(role)?;
    check_id(id)?;
    let store = ctx.store();
    let params = load_params(ctx, &store)?;
    let mut rc = store.registration_center()?;
    let mut directory = store.directory(&params)?;
    let (creds, record) = rc.register(id, role, &mut ctx.rng(&format!("register:{id}")))?;
    directory.insert(record.clone())?;
    let path = store.save_credentials(&params, &creds)?;
    store.save_directory(&directory)?;
    store.save_registration_center(&rc)?;
    let sid = hex::encode(params.curve.encode_scalar(&record.sid));
    if ctx.json {
        print_json(&json!({ "id": id, "role": role.as_str(), "sid": sid, "credentials": path }));
    } else {
        println!("registered {role} {id}");
        println!("SID {sid}");
        eprintln!("credentials written to {} (mode 0600)", path.display());
    }
    Ok(())
}

/// Everything needed to run the user side against a stored server record.
fn user_session(ctx: &Ctx, store: &Store, user: Option<&str>, server: Option<&str>) -> Result<UserSession, CliError> {
    let params = load_params(ctx, store)?;
    let directory = store.directory(&params)?;
    let creds = store.pick(&params, user, Role::User)?;
    let record = match server {
        Some(id) => {
            let s = store.pick(&params, Some(id), Role::Server)?;
            directory.lookup(&s.sid)?.clone()
        }
        None => {
            let servers: Vec<_> = directory.records().filter(|r| r.role == Role::Server).collect();
            match servers.as_slice() {
                [only] => (*only).clone(),
                [] => return Err(CliError::config("directory holds no server record")),
                _ => return Err(CliError::config("several server records; choose one with --server")),
            }
        }
    };
    Ok(UserSession::new(params.curve, creds, record, ctx.settings.delta)?)
}

fn server_context(ctx: &Ctx, store: &Store, id: Option<&str>) -> Result<ServerContext, CliError> {
    let params = load_params(ctx, store)?;
    let directory = store.directory(&params)?;
    let creds = store.pick(&params, id, Role::Server)?;
    Ok(ServerContext::new(params.curve, creds, directory, ctx.settings.delta)?)
}

fn expect_m1(curve: &Curve, bytes: &[u8]) -> Result<mec_auth::codec::M1, HandshakeError> {
    match decode_message(curve, bytes)? {
        Message::M1(m) => Ok(m),
        _ => Err(HandshakeError::UnexpectedMessage("expected M1")),
    }
}

fn expect_m2(curve: &Curve, bytes: &[u8]) -> Result<mec_auth::codec::M2, HandshakeError> {
    match decode_message(curve, bytes)? {
        Message::M2(m) => Ok(m),
        _ => Err(HandshakeError::UnexpectedMessage("expected M2")),
    }
}

fn expect_m3(curve: &Curve, bytes: &[u8]) -> Result<mec_auth::codec::M3, HandshakeError> {
    match decode_message(curve, bytes)? {
        Message::M3(m) => Ok(m),
        _ => Err(HandshakeError::UnexpectedMessage("expected M3")),
    }
}

fn cmd_demo(ctx: &Ctx, user: Option<&str>, server: Option<&str>) -> Result<(), CliError> {
    let store = ctx.store();
    let mut u = user_session(ctx, &store, user, server)?;
    let server_ctx = server_context(ctx, &store, server)?;
    let curve = server_ctx.curve.clone();
    let mut s = server_ctx.session();
    let now = ctx.now();

    let m1 = encode_message(&curve, &Message::M1(u.start(&mut ctx.rng("session"), now)?));
    let m2 = {
        let msg = expect_m1(&curve, &m1).map_err(|e| s.reject(e))?;
        encode_message(&curve, &Message::M2(s.on_m1(&msg, now)?))
    };
    let (m3, user_key) = {
        let msg = expect_m2(&curve, &m2).map_err(|e| u.reject(e))?;
        let (m3, key) = u.on_m2(&msg, now)?;
        (encode_message(&curve, &Message::M3(m3)), key)
    };
    let server_key = {
        let msg = expect_m3(&curve, &m3).map_err(|e| s.reject(e))?;
        s.on_m3(&msg)?
    };
    let keys_match = user_key == server_key;
    if ctx.json {
        print_json(&json!({
            "curve": curve.name(),
            "timestamp": now,
            "frames": { "m1": hex::encode(&m1), "m2": hex::encode(&m2), "m3": hex::encode(&m3) },
            "user_fingerprint": user_key.fingerprint(),
            "server_fingerprint": server_key.fingerprint(),
            "keys_match": keys_match,
        }));
    } else {
        println!("M1 {} bytes, M2 {} bytes, M3 {} bytes", m1.len(), m2.len(), m3.len());
        println!("user key fingerprint   {}", user_key.fingerprint());
        println!("server key fingerprint {}", server_key.fingerprint());
        println!("{}", if keys_match { "keys match" } else { "keys DIFFER" });
    }
    if keys_match {
        Ok(())
    } else {
        Err(CliError::Protocol("session keys differ".into()))
    }
}

fn io_protocol(e: std::io::Error) -> CliError {
    CliError::Protocol(format!("transport: {e}"))
}

fn send(stream: &mut TcpStream, frame: &[u8]) -> Result<(), CliError> {
    stream.write_all(frame).and_then(|_| stream.flush()).map_err(io_protocol)
}

struct ServedSession {
    frames: [Vec<u8>; 3],
    fingerprint: String,
}

fn serve_one(ctx: &Ctx, curve: &Curve, s: &mut ServerSession, stream: &mut TcpStream) -> Result<ServedSession, CliError> {
    stream.set_read_timeout(Some(IO_TIMEOUT)).map_err(io_protocol)?;
    let m1 = read_frame(stream).map_err(io_protocol)?;
    let msg = expect_m1(curve, &m1).map_err(|e| s.reject(e))?;
    let m2 = encode_message(curve, &Message::M2(s.on_m1(&msg, ctx.now())?));
    send(stream, &m2)?;
    let m3 = read_frame(stream).map_err(io_protocol)?;
    let msg = expect_m3(curve, &m3).map_err(|e| s.reject(e))?;
    let key = s.on_m3(&msg)?;
    Ok(ServedSession { frames: [m1, m2, m3], fingerprint: key.fingerprint() })
}

fn cmd_serve(ctx: &Ctx, id: Option<&str>, max_sessions: Option<usize>) -> Result<(), CliError> {
    let addr = ctx.settings.listen.clone().unwrap_or_else(|| "127.0.0.1:7878".to_string());
    let server_ctx = server_context(ctx, &ctx.store(), id)?;
    let listener = TcpListener::bind(&addr).map_err(|e| CliError::config(format!("cannot listen on {addr}: {e}")))?;
    let local = listener.local_addr().map_err(|e| CliError::config(e.to_string()))?;
    eprintln!("listening on {local} as {}", server_ctx.creds.id);

    let ctx = Arc::new(Ctx { settings: ctx.settings.clone(), json: ctx.json, now: ctx.now });
    let counter = Arc::new(AtomicUsize::new(0));
    let mut handles = Vec::new();
    for stream in listener.incoming() {
        let mut stream = match stream {
            Ok(s) => s,
            Err(e) => {
                eprintln!("accept failed: {e}");
                continue;
            }
        };
        let n = counter.fetch_add(1, Ordering::SeqCst) + 1;
        let (ctx, server_ctx) = (Arc::clone(&ctx), server_ctx.clone());
        handles.push(thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            let mut session = server_ctx.session();
            match serve_one(&ctx, &server_ctx.curve, &mut session, &mut stream) {
                Ok(done) if ctx.json => println!(
                    "{}",
                    json!({
                        "session": n, "peer": peer, "ok": true, "fingerprint": done.fingerprint,
                        "frames": { "m1": hex::encode(&done.frames[0]), "m2": hex::encode(&done.frames[1]), "m3": hex::encode(&done.frames[2]) },
                    })
                ),
                Ok(done) => println!("session {n} from {peer}: key fingerprint {}", done.fingerprint),
                Err(e) if ctx.json => println!("{}", json!({ "session": n, "peer": peer, "ok": false, "error": e.to_string() })),
                Err(e) => println!("session {n} from {peer}: rejected: {e}"),
            }
        }));
        if max_sessions.is_some_and(|m| n >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

fn cmd_connect(ctx: &Ctx, id: Option<&str>) -> Result<(), CliError> {
    let addr = ctx.settings.connect.clone().unwrap_or_else(|| "127.0.0.1:7878".to_string());
    let store = ctx.store();
    let mut u = user_session(ctx, &store, id, None)?;
    let curve = store.params()?.curve;
    let mut stream = TcpStream::connect(&addr).map_err(|e| CliError::Protocol(format!("cannot connect to {addr}: {e}")))?;
    stream.set_read_timeout(Some(IO_TIMEOUT)).map_err(io_protocol)?;

    let m1 = encode_message(&curve, &Message::M1(u.start(&mut ctx.rng("session"), ctx.now())?));
    send(&mut stream, &m1)?;
    let m2 = read_frame(&mut stream).map_err(|e| {
        CliError::Protocol(format!("server closed the connection without answering ({e}); it rejected M1"))
    })?;
    let msg = expect_m2(&curve, &m2).map_err(|e| u.reject(e))?;
    let (m3, key) = u.on_m2(&msg, ctx.now())?;
    let m3 = encode_message(&curve, &Message::M3(m3));
    send(&mut stream, &m3)?;
    if ctx.json {
        print_json(&json!({
            "frames": { "m1": hex::encode(&m1), "m2": hex::encode(&m2), "m3": hex::encode(&m3) },
            "fingerprint": key.fingerprint(),
        }));
    } else {
        println!("authenticated server at {addr}");
        println!("key fingerprint {}", key.fingerprint());
    }
    Ok(())
}

fn cmd_suite(ctx: &Ctx) -> Result<(), CliError> {
    let curve = match ctx.requested_curve()? {
        Some(c) => c,
        None => match ctx.store().params() {
            Ok(p) => p.curve,
            Err(_) => Curve::by_name(DEFAULT_CURVE)?,
        },
    };
    let report = run_claim_suite(&SuiteConfig::full(curve, ctx.settings.seed.unwrap_or(DEFAULT_SUITE_SEED)));
    if ctx.json {
        print_json(&serde_json::to_value(&report).expect("report serializes"));
    } else {
        println!("claim suite on {}", report.curve);
        for c in &report.checks {
            println!("[{}] {} / {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.claim, c.scenario, c.detail);
        }
    }
    let failed: Vec<_> = report.failures().map(|c| format!("{}/{}", c.claim, c.scenario)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ClaimViolation(format!("claim violations: {}", failed.join(", "))))
    }
}

fn cmd_script(ctx: &Ctx, path: &PathBuf, user: Option<&str>, server: Option<&str>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let script = parse_script(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let store = ctx.store();
    let params = load_params(ctx, &store)?;
    let directory = store.directory(&params)?;
    let parties = Parties {
        user: store.pick(&params, user, Role::User)?,
        server: store.pick(&params, server, Role::Server)?,
        params,
        directory: Arc::new(directory),
        delta: ctx.settings.delta,
    };
    let outcome = run_script(&parties, &script, ctx.settings.seed.unwrap_or(DEFAULT_SUITE_SEED))?;
    if ctx.json {
        print_json(&serde_json::to_value(&outcome).expect("outcome serializes"));
    } else {
        println!("user: {}  server: {}", outcome.user_state, outcome.server_state);
        for e in &outcome.errors {
            println!("{:?} rejected: {}", e.party, e.error);
        }
        match (&outcome.user_key, &outcome.server_key) {
            (Some(u), Some(s)) => println!("keys {u} / {s} {}", if outcome.keys_equal { "match" } else { "differ" }),
            _ => println!("no shared key established"),
        }
    }
    if outcome.done_against_dishonest_peer {
        return Err(CliError::ClaimViolation("a party completed against a forged or replayed frame".into()));
    }
    Ok(())
}

fn cmd_cost_report(ctx: &Ctx) -> Result<(), CliError> {
    let curve = match ctx.requested_curve()? {
        Some(c) => c,
        None => Curve::by_name(DEFAULT_CURVE)?,
    };
    let report = cost_report(&curve);
    if ctx.json {
        print_json(&serde_json::to_value(&report).expect("report serializes"));
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}
