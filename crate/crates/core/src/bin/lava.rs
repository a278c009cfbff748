use std::fs;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use lava::baker::{bake_asset, decimate, parse_scene, BakeConfig};
use lava::camera::Camera;
use lava::codec::{decode_asset, encode_asset, read_container_info, EncodeOptions, FLAG_DEFLATE, FLAG_SPECULAR};
use lava::config::{parse_camera, parse_params_csv};
use lava::image::{psnr, read_transmittance, write_transmittance, RgbImage};
use lava::model::{AvatarAsset, ExpressionParams};
use lava::oracle::oracle_render;
use lava::raster::{render, BlendMode, Frame, RenderOptions, Renderer};
use lava::stream::{
    client_session, BlendSite, ClientConfig, Server, ServerConfig, SessionStats, StreamError, StreamFrame, TcpChannel,
    TextureCodec, Transport, WsChannel,
};
use lava::{Error, InputError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "lava", version, about = "Layered-mesh volumetric avatars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bake an analytic scene into a .lava asset.
    Bake {
        scene: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Lattice resolution per axis.
        #[arg(long, default_value_t = 512)]
        grid: usize,
        /// Texture resolution.
        #[arg(long, default_value_t = 512)]
        tex: usize,
        /// Warp map resolution (defaults to --tex).
        #[arg(long)]
        warp_res: Option<usize>,
        /// Bake and export view-dependent SH coefficients.
        #[arg(long)]
        specular: bool,
        /// Deflate-compress the chunks.
        #[arg(long)]
        deflate: bool,
    },
    /// Rasterize one frame per params row.
    Render {
        asset: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Prebaked)]
        mode: ModeArg,
        #[command(flatten)]
        out: OutputArgs,
        /// Report fragments whose depth order contradicts layer order.
        #[arg(long)]
        check_order: bool,
    },
    /// Ray-trace the analytic scene directly.
    OracleRender {
        scene: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        specular: bool,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// PSNR between same-named PNG frames of two directories.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Psnr)]
        metric: Metric,
        /// Restrict to pixels with transmittance below 1 in this
        /// directory's `.t` sidecars.
        #[arg(long)]
        foreground: Option<PathBuf>,
    },
    /// Stream an asset and a params sequence to clients.
    Serve {
        asset: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value_t = ServeMode::Client)]
        mode: ServeMode,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Also accept WebSocket clients here.
        #[arg(long)]
        listen_ws: Option<String>,
        #[arg(long, value_enum, default_value_t = CodecArg::Raw)]
        codec: CodecArg,
        /// Exit after this many sessions per listener.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Connect to a server and render the stream.
    Play {
        /// `host:port` for TCP or `ws://host:port/` for WebSocket.
        #[arg(long)]
        connect: String,
        #[arg(long)]
        camera: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = BlendArg::Client)]
        mode: BlendArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Prebaked)]
        render_mode: ModeArg,
    },
    /// Frame-rate table over output sizes and mesh resolutions.
    Bench {
        asset: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [256, 512, 1024])]
        sizes: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_values_t = [32, 128, 512])]
        mesh: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Prebaked)]
        mode: ModeArg,
    },
    /// Print the header, metadata, and chunk table of an asset.
    Inspect { asset: PathBuf },
}

#[derive(clap::Args)]
struct OutputArgs {
    /// Also write LVFB raw framebuffers.
    #[arg(long)]
    raw: bool,
    /// Also write transmittance sidecars (`.t`).
    #[arg(long)]
    transmittance: bool,
    /// Background color as `r,g,b` in [0, 1].
    #[arg(long, value_parser = parse_rgb, default_value = "0,0,0")]
    background: [f64; 3],
}

impl OutputArgs {
    fn background(&self) -> [f64; 3] {
        self.background
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Prebaked,
    Fused,
}

impl From<ModeArg> for BlendMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Prebaked => BlendMode::Prebaked,
            ModeArg::Fused => BlendMode::Fused,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Psnr,
}

#[derive(Clone, Copy, ValueEnum)]
enum ServeMode {
    Client,
    Server,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum BlendArg {
    Client,
    Server,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodecArg {
    Raw,
    Deflate,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lava: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Stream(StreamError::Io(_) | StreamError::Disconnected(_) | StreamError::WebSocket(_)) => EXIT_IO,
        _ => EXIT_DATA,
    }
}

fn run(command: Command) -> lava::Result<()> {
    match command {
        Command::Bake { scene, output, grid, tex, warp_res, specular, deflate } => {
            let scene = parse_scene(&read_text(&scene)?)?;
            let config = BakeConfig { warp_res: warp_res.unwrap_or(tex), ..BakeConfig::new(grid, tex, specular) };
            let start = Instant::now();
            let asset = bake_asset(&scene, &config)?;
            let bytes = encode_asset(&asset, EncodeOptions { deflate })?;
            fs::write(&output, &bytes)?;
            eprintln!("baked {} in {:.1}s, {} bytes", output.display(), start.elapsed().as_secs_f64(), bytes.len());
        }
        Command::Render { asset, params, camera, output, mode, out, check_order } => {
            let asset = read_asset(&asset)?;
            let frames = read_params(&params, asset.mapper().param_count())?;
            let camera = parse_camera(&read_text(&camera)?)?;
            let options = RenderOptions { mode: mode.into(), debug_abuffer: check_order, background: out.background() };
            fs::create_dir_all(&output)?;
            let mut violations = 0;
            for (i, p) in frames.iter().enumerate() {
                let frame = render(&asset, p, &camera, &options)?;
                if let Some(report) = &frame.layer_order {
                    violations += report.violations.len();
                    if !report.is_empty() {
                        eprintln!("frame {i}: {} layer-order violations", report.violations.len());
                    }
                }
                write_frame(&output, i, &frame.image, &frame.transmittance, &out)?;
            }
            eprintln!("rendered {} frames to {}", frames.len(), output.display());
            if check_order {
                println!("layer-order violations: {violations}");
            }
        }
        Command::OracleRender { scene, params, camera, output, specular, out } => {
            let scene = parse_scene(&read_text(&scene)?)?;
            let frames = read_params(&params, scene.param_count())?;
            let camera = parse_camera(&read_text(&camera)?)?;
            fs::create_dir_all(&output)?;
            for (i, p) in frames.iter().enumerate() {
                let img = oracle_render(&scene, p, &camera, specular)?;
                write_frame(&output, i, &img.to_rgb8(out.background()), &img.transmittance_f32(), &out)?;
            }
            eprintln!("traced {} frames to {}", frames.len(), output.display());
        }
        Command::Compare { a, b, metric: Metric::Psnr, foreground } => compare(&a, &b, foreground.as_deref())?,
        Command::Serve { asset, params, mode, listen, listen_ws, codec, sessions } => {
            let asset = read_asset(&asset)?;
            let frames = read_params(&params, asset.mapper().param_count())?.into_iter().map(StreamFrame::new).collect();
            let modes = match mode {
                ServeMode::Client => vec![BlendSite::Client],
                ServeMode::Server => vec![BlendSite::Server],
                ServeMode::Both => vec![BlendSite::Client, BlendSite::Server],
            };
            let texture_codec = match codec {
                CodecArg::Raw => TextureCodec::Raw,
                CodecArg::Deflate => TextureCodec::Deflate,
            };
            let config = ServerConfig { modes, texture_codec, asset_encoding: EncodeOptions::default() };
            serve(Arc::new(Server::new(asset, frames, config)?), &listen, listen_ws.as_deref(), sessions)?;
        }
        Command::Play { connect, camera, output, mode, render_mode } => {
            let camera = parse_camera(&read_text(&camera)?)?;
            play(&connect, &camera, &output, mode, render_mode)?;
        }
        Command::Bench { asset, sizes, mesh, frames, mode } => {
            let asset = read_asset(&asset)?;
            bench(&asset, &sizes, &mesh, frames.max(1), mode.into())?;
        }
        Command::Inspect { asset } => inspect(&asset)?,
    }
    Ok(())
}

fn parse_rgb(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s.split(',').map(|c| c.trim().parse::<f64>().map_err(|e| format!("{c:?}: {e}"))).collect::<Result<_, _>>()?;
    match v[..] {
        [r, g, b] if v.iter().all(|c| (0.0..=1.0).contains(c)) => Ok([r, g, b]),
        [_, _, _] => Err("components must lie in [0, 1]".into()),
        _ => Err(format!("expected r,g,b, got {} components", v.len())),
    }
}

fn read_text(path: &Path) -> lava::Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_asset(path: &Path) -> lava::Result<AvatarAsset> {
    let bytes = fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(decode_asset(&bytes)?)
}

fn read_params(path: &Path, expected: usize) -> lava::Result<Vec<ExpressionParams>> {
    let frames = parse_params_csv(&read_text(path)?, Some(expected))?;
    if frames.is_empty() {
        return Err(InputError::Invalid { what: "params", reason: format!("{} has no frames", path.display()) }.into());
    }
    Ok(frames)
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:05}")
}

fn write_frame(dir: &Path, i: usize, image: &RgbImage, transmittance: &[f32], out: &OutputArgs) -> lava::Result<()> {
    let base = dir.join(frame_name(i));
    image.write_png(&base.with_extension("png"))?;
    if out.raw {
        fs::write(base.with_extension("raw"), image.to_raw_bytes())?;
    }
    if out.transmittance {
        write_transmittance(&base.with_extension("t"), image.width(), image.height(), transmittance)?;
    }
    Ok(())
}

fn png_names(dir: &Path) -> lava::Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    Ok(names)
}

fn compare(a: &Path, b: &Path, foreground: Option<&Path>) -> lava::Result<()> {
    let names = png_names(a)?;
    if names.is_empty() || names != png_names(b)? {
        return Err(InputError::Invalid { what: "compare", reason: "directories hold different PNG sets".into() }.into());
    }
    let mut sum = 0.0;
    let mut finite = 0usize;
    for name in &names {
        let (ia, ib) = (RgbImage::read_png(&a.join(name))?, RgbImage::read_png(&b.join(name))?);
        let mask = match foreground {
            Some(dir) => {
                let (w, h, t) = read_transmittance(&dir.join(name).with_extension("t"))?;
                if (w, h) != (ia.width(), ia.height()) {
                    return Err(InputError::Invalid { what: "foreground", reason: format!("{name}: size mismatch") }.into());
                }
                Some(t.iter().map(|&v| v < 1.0).collect::<Vec<bool>>())
            }
            None => None,
        };
        let db = psnr(&ia, &ib, mask.as_deref())?;
        println!("{name}\t{db:.3}");
        if db.is_finite() {
            sum += db;
            finite += 1;
        }
    }
    // Identical frames have infinite PSNR; the mean covers the rest.
    if finite == 0 {
        println!("mean\tinf");
    } else {
        println!("mean\t{:.3}\t({} of {} frames identical)", sum / finite as f64, names.len() - finite, names.len());
    }
    Ok(())
}

fn log_session(transport: &str, peer: std::net::SocketAddr, r: &Result<SessionStats, StreamError>) {
    match r {
        Ok(s) => eprintln!(
            "{transport} {peer}: {:?}-blend, {} frames, {} bytes sent, asset {} bytes, mean frame payload {:.1} bytes",
            s.mode,
            s.frames,
            s.bytes_sent,
            s.asset_bytes,
            s.mean_frame_payload()
        ),
        Err(e) => eprintln!("{transport} {peer}: session aborted: {e}"),
    }
}

fn serve(server: Arc<Server>, listen: &str, listen_ws: Option<&str>, sessions: Option<usize>) -> lava::Result<()> {
    let tcp = TcpListener::bind(listen)?;
    eprintln!("serving on {}", tcp.local_addr()?);
    let ws = match listen_ws {
        Some(addr) => {
            let l = TcpListener::bind(addr)?;
            eprintln!("websocket bridge on ws://{}/", l.local_addr()?);
            let server = Arc::clone(&server);
            Some(thread::spawn(move || {
                server.serve_listener(l, Transport::WebSocket, sessions, |p, r| log_session("ws", p, r))
            }))
        }
        None => None,
    };
    let mut results = server.serve_listener(tcp, Transport::Tcp, sessions, |p, r| log_session("tcp", p, r))?;
    if let Some(h) = ws {
        results.extend(h.join().map_err(|_| Error::Io(std::io::Error::other("websocket listener panicked")))??);
    }
    let ok: Vec<&SessionStats> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    println!(
        "sessions {} ok {} bytes_sent {} frames {}",
        results.len(),
        ok.len(),
        ok.iter().map(|s| s.bytes_sent).sum::<u64>(),
        ok.iter().map(|s| s.frames as u64).sum::<u64>()
    );
    Ok(())
}

fn play(connect: &str, camera: &Camera, output: &Path, mode: BlendArg, render_mode: ModeArg) -> lava::Result<()> {
    fs::create_dir_all(output)?;
    let mode = match mode {
        BlendArg::Client => BlendSite::Client,
        BlendArg::Server => BlendSite::Server,
    };
    let config = ClientConfig {
        mode: Some(mode),
        options: RenderOptions { mode: render_mode.into(), ..RenderOptions::default() },
    };
    let mut sink = |i: u32, f: Frame| {
        f.image.write_png(&output.join(frame_name(i as usize)).with_extension("png")).map_err(|e| StreamError::Sink(e.to_string()))
    };
    let result = match connect.strip_prefix("ws://") {
        Some(rest) => {
            let host = rest.split('/').next().unwrap_or(rest);
            let mut ch = WsChannel::connect(connect, TcpStream::connect(host).map_err(StreamError::from)?)?;
            let r = client_session(&mut ch, &config, &mut |_| *camera, &mut sink);
            ch.close();
            r
        }
        None => {
            let mut ch = TcpChannel::tcp(TcpStream::connect(connect).map_err(StreamError::from)?).map_err(StreamError::from)?;
            client_session(&mut ch, &config, &mut |_| *camera, &mut sink)
        }
    };
    match result {
        Ok(s) => {
            println!(
                "frames {} bytes_received {} asset_bytes {} frame_payload_bytes {}",
                s.frames, s.bytes_received, s.asset_bytes, s.frame_payload_bytes
            );
            Ok(())
        }
        Err(f) => {
            eprintln!("kept {} frames before the failure", f.stats.frames);
            Err(f.error.into())
        }
    }
}

fn bench(asset: &AvatarAsset, sizes: &[u32], meshes: &[usize], frames: usize, mode: BlendMode) -> lava::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params: Vec<ExpressionParams> = (0..frames)
        .map(|_| ExpressionParams::new((0..asset.mapper().param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect::<Result<_, _>>()?;
    let options = RenderOptions { mode, ..RenderOptions::default() };
    let (rows, _) = asset.mesh().grid();
    println!("threads {}  layers {}  tex {}  frames {}", rayon::current_num_threads(), asset.mesh().num_layers(), asset.textures().res(), frames);
    print!("{:>8}", "mesh");
    for s in sizes {
        print!("{:>12}", format!("{s}x{s}"));
    }
    println!();
    for &m in meshes {
        print!("{:>8}", format!("{m}^2"));
        let decimated = match decimate(asset.mesh(), m) {
            Ok(mesh) => asset.with_mesh(mesh)?,
            Err(_) => {
                println!("  (grid {rows} not divisible by {m})");
                continue;
            }
        };
        for &s in sizes {
            let camera = Camera::orbit(asset.scene_center(), 4.0, 0.0, 0.0, 30f64.to_radians(), s, s)?;
            let mut renderer = Renderer::new();
            renderer.render(&decimated, &params[0], &camera, &options)?;
            let start = Instant::now();
            for p in &params {
                renderer.render(&decimated, p, &camera, &options)?;
            }
            print!("{:>12}", format!("{:.1} fps", frames as f64 / start.elapsed().as_secs_f64()));
        }
        println!();
    }
    Ok(())
}

fn inspect(path: &Path) -> lava::Result<()> {
    let bytes = fs::read(path)?;
    let info = read_container_info(&bytes)?;
    let m = info.meta;
    let yes = |f: u16| if info.flags & f != 0 { "yes" } else { "no" };
    println!("file        {} ({} bytes)", path.display(), bytes.len());
    println!("version     {}", info.version);
    println!("flags       {:#06x} (specular {}, deflate {})", info.flags, yes(FLAG_SPECULAR), yes(FLAG_DEFLATE));
    println!("layers      {}", m.layers);
    println!("warp_basis  {}", m.warp_basis);
    println!("tex_basis   {}", m.tex_basis);
    println!("params      {}", m.params);
    println!("grid        {}x{}", m.grid_rows, m.grid_cols);
    println!("tex_res     {}", m.tex_res);
    println!("warp_res    {}", m.warp_res);
    println!("center      {} {} {}", m.scene_center[0], m.scene_center[1], m.scene_center[2]);
    println!("chunk   offset        length");
    for c in &info.chunks {
        println!("{}    {:<12}  {}", c.name(), c.offset, c.length);
    }
    Ok(())
}
