use std::collections::HashMap;
use std::fs;

use nirvana::codec::{bpp, read_container_file, FORMAT_VERSION};
use nirvana::pipeline::{decode_video, encode_chunked, psnr, stream_settings, EncodeConfig};
use nirvana::synth::{generate, SynthKind, SynthSpec};
use nirvana::video_io::{load_raw_video, num_groups, patch_centroids, Video};

use crate::args::{BenchArgs, DecodeArgs, EncodeArgs, InfoArgs, VideoKind};
use crate::config::Settings;
use crate::fail::{CliResult, Failure};
use crate::output::write_atomic;

fn read_file(path: &std::path::Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

/// Checks everything that depends on the video size before training starts.
fn check_layout(config: &EncodeConfig, width: usize, height: usize, frames: usize) -> CliResult {
    let m = &config.model;
    patch_centroids(width, height, (m.patch_h, m.patch_w))?;
    config.validate(num_groups(frames, m.group_size))?;
    Ok(())
}

pub fn encode(a: &EncodeArgs) -> CliResult {
    let settings = Settings::from_flags(Settings::full(), &a.train)?;
    let config = settings.encode_config()?;
    if a.width == 0 || a.height == 0 {
        return Err(Failure::usage("--width and --height must be positive"));
    }
    let frame_bytes = (a.width * a.height * 3) as u64;
    let frames = match a.frames {
        Some(0) => return Err(Failure::usage("--frames must be positive")),
        Some(n) => n,
        None => {
            let len = fs::metadata(&a.input)
                .map_err(|e| Failure::io(format!("{}: {e}", a.input.display())))?
                .len();
            if len == 0 || len % frame_bytes != 0 {
                return Err(Failure::io(format!(
                    "{}: {len} bytes is not a whole number of {}x{} frames",
                    a.input.display(),
                    a.width,
                    a.height
                )));
            }
            (len / frame_bytes) as usize
        }
    };
    check_layout(&config, a.width, a.height, frames)?;
    let video = load_raw_video(&a.input, a.width, a.height, frames)?;
    let out = encode_chunked(&video, &config, settings.workers)?;
    write_atomic(&a.output, &out.bytes)?;
    if let Some(path) = &a.report {
        let mut csv = Vec::new();
        out.report.write_csv(&mut csv)?;
        write_atomic(path, &csv)?;
    }
    let r = &out.report;
    println!(
        "psnr {:.2} dB  bpp {:.4}  bytes {}  groups {}  time {:.1} s",
        r.psnr_db,
        r.bpp,
        r.file_bytes,
        r.groups.len(),
        r.seconds
    );
    Ok(())
}

pub fn decode(a: &DecodeArgs) -> CliResult {
    let decoded = decode_video(read_file(&a.input)?)?;
    let rgb = decoded.video.to_rgb24();
    let score = match &a.psnr_against {
        Some(path) => {
            let v = &decoded.video;
            let reference = load_raw_video(path, v.width(), v.height(), v.num_frames())?;
            // Scored on the 8-bit frames actually written.
            let written = Video::from_rgb24(&rgb, v.width(), v.height(), v.num_frames())?;
            Some(psnr(&reference, &written)?)
        }
        None => None,
    };
    write_atomic(&a.output, &rgb)?;
    let v = &decoded.video;
    print!("decoded {} frames of {}x{}", v.num_frames(), v.width(), v.height());
    match score {
        Some(db) => println!("  psnr {db:.2} dB"),
        None => println!(),
    }
    Ok(())
}

pub fn info(a: &InfoArgs) -> CliResult {
    let c = read_container_file(&a.input)?;
    let s = stream_settings(&c)?;
    let h = &c.header;
    let m = &s.model;
    println!("format version   {FORMAT_VERSION}");
    println!("frames           {}", h.num_frames);
    println!("resolution       {}x{}", h.width, h.height);
    println!("patch size       {}x{}", h.patch_w, h.patch_h);
    println!("group size       {}", h.group_size);
    println!("groups           {}", h.num_groups());
    println!(
        "model            {} layers of width {}, omega0 {}, latent levels {}",
        m.num_siren_layers, m.width, m.omega0, m.latent_levels
    );
    println!("lambda           {}", s.lambda);
    println!("iterations       {} first, {} rest", s.iters_first, s.iters_rest);
    println!("seed             {}", s.seed);
    println!("chunks           {}", h.chunks.len());
    for (i, e) in h.chunks.iter().enumerate() {
        println!(
            "  chunk {i}: groups {}..{} at offset {}",
            e.first_group,
            e.first_group + e.group_count,
            e.offset
        );
    }
    let sizes = c.payload_sizes()?;
    for (g, b) in sizes.iter().enumerate() {
        println!("  group {g}: {b} bytes");
    }
    let payload: usize = sizes.iter().sum();
    println!("header bytes     {}", c.header_len);
    println!("payload bytes    {payload}");
    println!("file bytes       {}", c.file_len());
    println!(
        "bpp              {:.6}",
        bpp(
            c.file_len() as u64,
            h.num_frames as usize,
            h.height as usize,
            h.width as usize
        )
    );
    Ok(())
}

fn synth_kind(k: VideoKind) -> SynthKind {
    match k {
        VideoKind::Static => SynthKind::Static,
        VideoKind::Translating => SynthKind::Translating,
        VideoKind::NoiseModulated => SynthKind::NoiseModulated,
    }
}

fn kind_name(k: VideoKind) -> &'static str {
    match k {
        VideoKind::Static => "static",
        VideoKind::Translating => "translating",
        VideoKind::NoiseModulated => "noise-modulated",
    }
}

#[derive(Debug, serde::Serialize)]
struct BenchRow {
    sweep: &'static str,
    video: &'static str,
    lambda: f64,
    patch_size: usize,
    group_size: usize,
    iters_first: usize,
    iters: usize,
    psnr_db: f64,
    bpp: f64,
    file_bytes: usize,
    seconds: f64,
}

/// One sweep point per list entry, each varying a single setting of `base`.
fn sweep_points(a: &BenchArgs, base: &Settings) -> Vec<(&'static str, Settings)> {
    let mut points = Vec::new();
    for &v in &a.lambdas {
        points.push(("lambda", Settings { lambda_entropy: v, ..base.clone() }));
    }
    for &v in &a.patch_sizes {
        points.push(("patch", Settings { patch_size: Some(v), ..base.clone() }));
    }
    for &v in &a.group_sizes {
        points.push(("group", Settings { group_size: Some(v), ..base.clone() }));
    }
    for &v in &a.iters_list {
        points.push(("iters", Settings { iters: v, ..base.clone() }));
    }
    points
}

pub fn bench(a: &BenchArgs) -> CliResult {
    let base = Settings::from_flags(Settings::bench(), &a.train)?;
    if a.size == 0 || a.frames == 0 {
        return Err(Failure::usage("--size and --frames must be positive"));
    }
    if !a.motion.is_finite() || !(0.0..=1.0).contains(&a.noise) {
        return Err(Failure::usage("--motion must be finite and --noise within [0, 1]"));
    }
    let points = sweep_points(a, &base);
    // Reject bad sweep values up front rather than after hours of training.
    let mut configs = Vec::with_capacity(points.len());
    for (sweep, s) in &points {
        let c = s
            .encode_config()
            .map_err(|f| Failure::usage(format!("{sweep} sweep: {}", f.message)))?;
        check_layout(&c, a.size, a.size, a.frames)
            .map_err(|f| Failure::usage(format!("{sweep} sweep: {}", f.message)))?;
        configs.push(c);
    }

    let mut rows = Vec::new();
    for &kind in &a.videos {
        let spec = SynthSpec {
            motion: a.motion,
            noise: a.noise,
            ..SynthSpec::new(synth_kind(kind), a.size, a.size, a.frames, base.seed)
        };
        let video = generate(&spec)?;
        // Sweeps share their base point; each distinct setting is encoded once.
        let mut done: HashMap<String, (f64, f64, usize, f64)> = HashMap::new();
        for ((sweep, s), c) in points.iter().zip(&configs) {
            let key = format!("{c:?}");
            let (psnr_db, bpp, file_bytes, seconds) = match done.get(&key) {
                Some(r) => *r,
                None => {
                    let out = encode_chunked(&video, c, s.workers)?;
                    let r = &out.report;
                    let v = (r.psnr_db, r.bpp, r.file_bytes, r.seconds);
                    done.insert(key, v);
                    v
                }
            };
            eprintln!(
                "{:>16} {sweep:>6}: lambda {} patch {} group {} iters {} -> psnr {psnr_db:.2} bpp {bpp:.4}",
                kind_name(kind),
                c.lambda,
                c.model.patch_h,
                c.model.group_size,
                c.iters_rest
            );
            rows.push(BenchRow {
                sweep,
                video: kind_name(kind),
                lambda: c.lambda,
                patch_size: c.model.patch_h,
                group_size: c.model.group_size,
                iters_first: c.iters_first,
                iters: c.iters_rest,
                psnr_db,
                bpp,
                file_bytes,
                seconds,
            });
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)
            .map_err(|e| Failure::io(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::io(format!("csv: {e}")))?;
    write_atomic(&a.output, &bytes)?;
    println!("{} rows written to {}", rows.len(), a.output.display());
    Ok(())
}
