use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use triplet_analogy::abstracter::{correspondences, Weights};
use triplet_analogy::encoders::{encode_letter_string, Alphabet};
use triplet_analogy::scenarios::{complete_strings, correspond, parse_weights, transform, Completion, TransformInput};
use triplet_analogy::search::SearchConfig;
use triplet_analogy::structure::TripletStructure;
use triplet_analogy::workspace::Workspace;

/// Exit status when the analogy could not be completed.
const INCOMPLETE: u8 = 2;
/// Exit status for usage and I/O errors.
const USAGE: u8 = 1;

/// Analogy-making over triplet structures.
///
/// Exit status: 0 when the analogy is complete, 2 when it is incomplete,
/// 1 on usage or I/O errors.
#[derive(Parser)]
#[command(name = "tanalogy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a letter-string analogy, e.g. `abc:abd efg:efh --prompt ijk`.
    CompleteString {
        /// Example pairs written `before:after`.
        #[arg(required = true, value_name = "BEFORE:AFTER")]
        examples: Vec<String>,
        #[arg(long)]
        prompt: String,
        /// Allow successor and predecessor to swap roles (reversals).
        #[arg(long)]
        type_slips: bool,
        /// Letters in order; defaults to a..z.
        #[arg(long)]
        alphabet: Option<String>,
        #[command(flatten)]
        search: SearchArgs,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rewrite a source file by analogy with before/after example files.
    Transform {
        /// An example pair: the before file, then the after file. Repeatable.
        #[arg(long = "example", num_args = 2, value_names = ["BEFORE", "AFTER"], required = true, action = clap::ArgAction::Append)]
        examples: Vec<PathBuf>,
        /// The before file to transform.
        #[arg(long)]
        prompt: PathBuf,
        /// JSON annotations on tokens.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// A before/after documentation pair shared by every example.
        #[arg(long, num_args = 2, value_names = ["BEFORE", "AFTER"])]
        docs_pair: Option<Vec<PathBuf>>,
        #[command(flatten)]
        search: SearchArgs,
        /// Write the generated file here; the report still goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map the lexemes of one set of files onto another.
    Correspond {
        /// Files or directories of the first side.
        #[arg(long, num_args = 1.., required = true)]
        left: Vec<PathBuf>,
        /// Files or directories of the second side.
        #[arg(long, num_args = 1.., required = true)]
        right: Vec<PathBuf>,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the canonical text of a structure file, or of freshly encoded
    /// letter strings. With neither, prints an empty structure.
    Dump {
        #[arg(conflicts_with = "letters")]
        path: Option<PathBuf>,
        /// Encode this letter string (repeatable; tagged s1, s2, ...).
        #[arg(long)]
        letters: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SearchArgs {
    /// Maximum rule applications.
    #[arg(long, default_value_t = 500)]
    budget: usize,
    /// Radius for preferring work near the last change; 0 disables it.
    #[arg(long, default_value_t = 2)]
    locality: usize,
    /// JSON file mapping relation names to weights (default 1.0).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Recorded in the report. Ties are broken by name, so results do not
    /// depend on it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the search branches.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

impl SearchArgs {
    fn config(&self, alphabet: Option<&str>) -> Result<SearchConfig> {
        let weights = match &self.weights {
            Some(p) => {
                let map = parse_weights(&read(p)?).with_context(|| format!("{}: bad weights", p.display()))?;
                Weights::from_map(map)
            }
            None => Weights::default(),
        };
        let alphabet = match alphabet {
            Some(a) => Alphabet::new(a)?,
            None => Alphabet::default(),
        };
        if self.parallel == 0 {
            bail!("--parallel must be at least 1");
        }
        Ok(SearchConfig {
            budget: self.budget,
            locality_radius: self.locality,
            weights,
            seed: self.seed,
            parallel: self.parallel,
            alphabet,
            ..SearchConfig::default()
        })
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))
}

fn read_json(p: &Path) -> Result<String> {
    let text = read(p)?;
    serde_json::from_str::<Value>(&text).with_context(|| format!("{}: invalid JSON", p.display()))?;
    Ok(text)
}

/// Checks that an output path can be created before any search runs.
fn check_out(out: Option<&Path>) -> Result<()> {
    let Some(p) = out else { return Ok(()) };
    let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !dir.is_dir() {
        bail!("output directory {} does not exist", dir.display());
    }
    if p.is_dir() {
        bail!("output path {} is a directory", p.display());
    }
    Ok(())
}

/// Writes to `out` via a temporary file and a rename, so a failed write
/// leaves nothing behind; prints to stdout without `out`.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    let Some(p) = out else {
        print!("{text}");
        return Ok(());
    };
    let tmp = p.with_file_name(format!(
        ".{}.tmp{}",
        p.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    let written = fs::write(&tmp, text).and_then(|_| fs::rename(&tmp, p));
    if let Err(e) = written {
        let _ = fs::remove_file(&tmp);
        return Err(e).with_context(|| format!("cannot write {}", p.display()));
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    format!("{}\n", serde_json::to_string_pretty(v).expect("JSON values serialize"))
}

fn status_code(c: &Completion) -> u8 {
    if c.is_complete() {
        0
    } else {
        INCOMPLETE
    }
}

/// Abstract node name to the token (or node name) each instance maps it to.
fn correspondence_map(ws: &Workspace) -> Value {
    let list: Vec<Value> = correspondences(ws)
        .into_iter()
        .map(|c| {
            let members: BTreeMap<String, String> = c
                .instances
                .iter()
                .map(|(tag, n)| {
                    let shown = ws.token(*n).unwrap_or_else(|| ws.structure.name(*n));
                    (tag.clone(), shown.to_string())
                })
                .collect();
            json!({ "abstract": ws.structure.name(c.abstract_node), "instances": members })
        })
        .collect();
    Value::Array(list)
}

/// Expands directories into their files, sorted. Files keep their own name;
/// files found in a directory are named by their path inside it.
fn collect_files(paths: &[PathBuf]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found = Vec::new();
            walk(p, &mut found)?;
            found.sort();
            for f in found {
                let name = f.strip_prefix(p).unwrap_or(&f).to_string_lossy().into_owned();
                out.push((name, read(&f)?));
            }
        } else {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            out.push((name, read(p)?));
        }
    }
    let mut names: Vec<&String> = out.iter().map(|(n, _)| n).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        bail!("two input files are both named {}", w[0]);
    }
    Ok(out)
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in fs::read_dir(dir).with_context(|| format!("cannot list {}", dir.display()))? {
        let p = e?.path();
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::CompleteString {
            examples,
            prompt,
            type_slips,
            alphabet,
            search,
            out,
        } => {
            let config = search.config(alphabet.as_deref())?;
            check_out(out.as_deref())?;
            let pairs: Vec<(&str, &str)> = examples
                .iter()
                .map(|e| e.split_once(':').with_context(|| format!("example {e:?} is not BEFORE:AFTER")))
                .collect::<Result<_>>()?;
            for s in pairs.iter().flat_map(|(b, a)| [b, a]).chain([&prompt.as_str()]) {
                config.alphabet.check(s)?;
            }
            let c = complete_strings(&pairs, &prompt, &config, type_slips)?;
            let report = json!({
                "completion": c.is_complete().then(|| c.tokens.concat()),
                "status": c.status,
                "report": c.report,
                "applications": c.outcome.applications,
                "seed": config.seed,
            });
            emit(out.as_deref(), &pretty(&report))?;
            Ok(status_code(&c))
        }
        Command::Transform {
            examples,
            prompt,
            annotations,
            docs_pair,
            search,
            out,
        } => {
            let config = search.config(None)?;
            check_out(out.as_deref())?;
            let examples = examples
                .chunks(2)
                .map(|p| Ok((read(&p[0])?, read(&p[1])?)))
                .collect::<Result<Vec<_>>>()?;
            if examples.len() == 1 {
                eprintln!("warning: a single example pair gives a weak analogy");
            }
            let input = TransformInput {
                examples,
                prompt: read(&prompt)?,
                annotations: annotations.as_deref().map(read_json).transpose()?,
                docs: docs_pair.map(|d| Ok::<_, anyhow::Error>((read(&d[0])?, read(&d[1])?))).transpose()?,
            };
            let t = transform(&input, &config)?;
            let c = &t.completion;
            let mut report = json!({
                "status": c.status,
                "report": c.report,
                "correspondences": correspondence_map(&c.outcome.workspace),
                "applications": c.outcome.applications,
                "seed": config.seed,
            });
            match &out {
                Some(p) if c.is_complete() => emit(Some(p), &t.text)?,
                Some(_) => {}
                None => report["text"] = json!(c.is_complete().then_some(&t.text)),
            }
            print!("{}", pretty(&report));
            Ok(status_code(c))
        }
        Command::Correspond {
            left,
            right,
            annotations,
            search,
            out,
        } => {
            let config = search.config(None)?;
            check_out(out.as_deref())?;
            let l = collect_files(&left)?;
            let r = collect_files(&right)?;
            let ann = annotations.as_deref().map(read_json).transpose()?;
            let (report, outcome) = correspond(&l, &r, ann.as_deref(), &config)?;
            let mut v = serde_json::to_value(&report)?;
            v["applications"] = json!(outcome.applications);
            v["seed"] = json!(config.seed);
            emit(out.as_deref(), &pretty(&v))?;
            Ok(0)
        }
        Command::Dump { path, letters, out } => {
            check_out(out.as_deref())?;
            let text = match path {
                Some(p) => {
                    let s = TripletStructure::from_text(&read(&p)?).with_context(|| format!("{}", p.display()))?;
                    s.to_text()
                }
                None if letters.is_empty() => TripletStructure::new().to_text(),
                None => {
                    let mut ws = Workspace::new();
                    let alphabet = Alphabet::default();
                    for (i, l) in letters.iter().enumerate() {
                        encode_letter_string(&mut ws, l, &format!("s{}", i + 1), &alphabet)?;
                    }
                    ws.structure.to_text()
                }
            };
            emit(out.as_deref(), &text)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE)
        }
    }
}
