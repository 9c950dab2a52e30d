use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use omrkit::abc::{emit_abc, parse_abc_with_diagnostics};
use omrkit::bpe::{train, TokenVocab};
use omrkit::canon::{canonicalize, mask_text, CanonConfig};
use omrkit::imgprep::{augment, segment_image, AugmentConfig, DEFAULT_OVERLAP};
use omrkit::mxl::serialize_musicxml;
use omrkit::Rational;
use serde_json::json;

use crate::corpus::{files_by_stem, par_map};

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Runs `f` on one file, or on every `.abc` file of a directory writing
/// `<stem>.<ext>` into the output directory. Per-file failures in directory
/// mode are reported and counted; the run continues.
fn map_abc(input: &Path, output: Option<&Path>, ext: &str, f: impl Fn(&str) -> Result<String> + Sync + Send) -> Result<()> {
    if !input.is_dir() {
        let text = read_input(Some(input))?;
        return write_output(output, &f(&text).with_context(|| input.display().to_string())?);
    }
    let Some(out_dir) = output else { bail!("a directory input needs `-o <directory>`") };
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let files: Vec<(String, PathBuf)> = files_by_stem(input, &["abc"])?.into_iter().collect();
    let results = par_map(&files, |(stem, path)| {
        let text = read_input(Some(path))?;
        let out = f(&text)?;
        fs::write(out_dir.join(format!("{stem}.{ext}")), out)?;
        Ok::<(), anyhow::Error>(())
    });
    let mut failed = 0;
    for ((stem, _), r) in files.iter().zip(results) {
        if let Err(e) = r {
            failed += 1;
            eprintln!("{stem}: {e:#}");
        }
    }
    eprintln!("{} of {} files written", files.len() - failed, files.len());
    Ok(())
}

#[derive(Args)]
pub struct CanonArgs {
    /// ABC file or directory of `.abc` files.
    input: PathBuf,
    /// Output file or directory (default: standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    bars_per_line: usize,
    /// Unit note length, e.g. `1/8`.
    #[arg(long, default_value = "1/8")]
    unit: String,
    /// Replace titles, lyrics, annotations and other text with the text token.
    #[arg(long)]
    mask: bool,
}

fn parse_ratio(s: &str) -> Result<Rational> {
    let (n, d) = s.split_once('/').with_context(|| format!("`{s}` is not a fraction"))?;
    let (n, d): (i64, i64) = (n.trim().parse()?, d.trim().parse()?);
    if n <= 0 || d <= 0 {
        bail!("`{s}` must be positive");
    }
    Ok(Rational::new(n, d))
}

pub fn canon(args: &CanonArgs) -> Result<()> {
    let config = CanonConfig { bars_per_line: args.bars_per_line, unit_note: parse_ratio(&args.unit)?, ..Default::default() };
    config.validate()?;
    map_abc(&args.input, args.output.as_deref(), "abc", |text| {
        let parsed = parse_abc_with_diagnostics(text)?;
        let mut score = canonicalize(&parsed.score, &config)?;
        if args.mask {
            score = mask_text(&score, &config.text_token);
        }
        Ok(emit_abc(&score))
    })
}

#[derive(Args)]
pub struct ConvertArgs {
    /// ABC file or directory of `.abc` files.
    input: PathBuf,
    /// Output file or directory (default: standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Do not print conversion diagnostics to standard error.
    #[arg(short, long)]
    quiet: bool,
}

pub fn convert(args: &ConvertArgs) -> Result<()> {
    map_abc(&args.input, args.output.as_deref(), "musicxml", |text| {
        let parsed = parse_abc_with_diagnostics(text)?;
        let conversion = omrkit::convert::convert(&parsed.score)?;
        if !args.quiet {
            for d in parsed.diagnostics.iter().chain(&conversion.diagnostics) {
                eprintln!("note: {}", d.message);
            }
        }
        Ok(serialize_musicxml(&conversion.tree))
    })
}

#[derive(Subcommand)]
pub enum BpeCommand {
    /// Learn merges from every file of a corpus directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 4097)]
        vocab_size: usize,
        #[arg(short, long)]
        output: PathBuf,
        /// Fail when the corpus cannot fill the vocabulary.
        #[arg(long)]
        strict: bool,
    },
    /// Text to space-separated token ids.
    Encode {
        #[arg(long)]
        vocab: PathBuf,
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Space-separated token ids to text.
    Decode {
        #[arg(long)]
        vocab: PathBuf,
        input: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn load_vocab(path: &Path) -> Result<TokenVocab> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(TokenVocab::from_json(&text)?)
}

pub fn bpe(cmd: &BpeCommand) -> Result<()> {
    match cmd {
        BpeCommand::Train { corpus, vocab_size, output, strict } => {
            let mut paths: Vec<PathBuf> = fs::read_dir(corpus)
                .with_context(|| format!("reading {}", corpus.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            paths.sort();
            let texts = paths.iter().map(fs::read_to_string).collect::<io::Result<Vec<String>>>()?;
            let vocab = train(texts.iter().map(String::as_str), *vocab_size, *strict)?;
            fs::write(output, vocab.to_json() + "\n")?;
            eprintln!("{} tokens from {} documents", vocab.len(), texts.len());
            Ok(())
        }
        BpeCommand::Encode { vocab, input, output } => {
            let vocab = load_vocab(vocab)?;
            let ids = vocab.encode(&read_input(input.as_deref())?);
            let text = ids.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
            write_output(output.as_deref(), &(text + "\n"))
        }
        BpeCommand::Decode { vocab, input, output } => {
            let vocab = load_vocab(vocab)?;
            let ids = read_input(input.as_deref())?
                .split_whitespace()
                .map(|t| t.parse::<u32>().with_context(|| format!("`{t}` is not a token id")))
                .collect::<Result<Vec<u32>>>()?;
            write_output(output.as_deref(), &vocab.decode(&ids)?)
        }
    }
}

#[derive(Subcommand)]
pub enum ImgprepCommand {
    /// Cut a page into segments and write the patch tensor as raw
    /// little-endian f32 with a JSON sidecar (`<output>.json`).
    Segment {
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_OVERLAP)]
        overlap: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Apply seeded background, crop and scale augmentation.
    Augment {
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 192)]
        gray_min: u8,
        #[arg(long, default_value_t = 255)]
        gray_max: u8,
        #[arg(long, default_value_t = 0.9)]
        scale_min: f64,
        #[arg(long, default_value_t = 1.0)]
        scale_max: f64,
        #[arg(long, default_value_t = 0)]
        margin_min: u32,
        #[arg(long, default_value_t = 64)]
        margin_max: u32,
    },
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    output.with_file_name(name)
}

pub fn imgprep(cmd: &ImgprepCommand) -> Result<()> {
    match cmd {
        ImgprepCommand::Segment { input, overlap, output } => {
            let img = image::open(input).with_context(|| format!("reading {}", input.display()))?.to_rgb8();
            let batch = segment_image::<f32>(&img, *overlap)?;
            let mut bytes = Vec::with_capacity(batch.data.len() * 4);
            for v in batch.data.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            fs::write(output, bytes).with_context(|| format!("writing {}", output.display()))?;
            let sidecar = json!({
                "shape": batch.data.shape(),
                "dtype": "float32",
                "byte_order": "little",
                "layout": ["segment", "patch", "channel", "row", "column"],
                "width": batch.width,
                "height": batch.height,
                "overlap_fraction": overlap,
                "geometry": batch.geometry,
            });
            fs::write(sidecar_path(output), serde_json::to_string_pretty(&sidecar)? + "\n")?;
            eprintln!("{} segments", batch.geometry.len());
            Ok(())
        }
        ImgprepCommand::Augment { input, seed, output, gray_min, gray_max, scale_min, scale_max, margin_min, margin_max } => {
            let img = image::open(input).with_context(|| format!("reading {}", input.display()))?.to_rgb8();
            let cfg = AugmentConfig {
                background_gray: (*gray_min, *gray_max),
                scale: (*scale_min, *scale_max),
                margin_crop: (*margin_min, *margin_max),
                seed: *seed,
                ..Default::default()
            };
            let (out, sample) = augment(&img, &cfg)?;
            out.save(output).with_context(|| format!("writing {}", output.display()))?;
            eprintln!("{}", serde_json::to_string(&sample)?);
            Ok(())
        }
    }
}
