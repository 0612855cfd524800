use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rkm::index_io;
use rkm::io;
use rkm::synth;
use rkm_core::baseline::{brute_force_scores, ScanMode};
use rkm_core::preprocess::{build_index, BuildConfig};
use rkm_core::query::top_n_query;
use rkm_core::vectors::{sort_items_by_norm, Role};

#[derive(Parser)]
#[command(
    name = "rkm",
    version,
    about = "Exact top-N search for the items most often found in users' top-k inner-product lists",
    after_help = "RKM_THREADS caps worker threads; every pipeline currently runs single-threaded, \
                  so any positive value is accepted and honored."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ours,
    Brute,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded synthetic user and item embeddings
    Gen {
        #[arg(long, default_value_t = 1000)]
        users: usize,
        #[arg(long, default_value_t = 500)]
        items: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Latent factor count (at most --dim)
        #[arg(long, default_value_t = 16)]
        rank: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out_users: PathBuf,
        #[arg(long)]
        out_items: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Build a search index from user and item vector files
    Preprocess {
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Largest k the index will answer
        #[arg(long, default_value_t = 25)]
        kmax: usize,
        /// Head length for the partial product bound
        #[arg(long, default_value_t = 10)]
        dprime: usize,
        /// First-pass scan budget, in multiples of users * kmax
        #[arg(long, default_value_t = 4)]
        b1: u32,
        /// Deficit-weighted scan budget, in multiples of users * kmax
        #[arg(long, default_value_t = 4)]
        b2: u32,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Budget curve offset; derived from scan deficits when omitted
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Query an index: prints `rank,item_id,score` for the top N items
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
        #[arg(short, long, default_value_t = 20)]
        n: usize,
        /// Append a stats block after the results
        #[arg(long)]
        stats: bool,
    },
    /// Time the engine or the brute-force baseline on raw vector files
    Bench {
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        items: PathBuf,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
        #[arg(short, long, default_value_t = 20)]
        n: usize,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long, default_value_t = 25)]
        kmax: usize,
        #[arg(long, default_value_t = 10)]
        dprime: usize,
        /// Give the brute-force method its norm-pruned early stop
        #[arg(long)]
        pruned: bool,
    },
    /// Export `rank,score` rows for the top items by exact score
    ScoreDist {
        #[arg(long)]
        index: PathBuf,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
        /// How many leading ranks to export (at most the item count)
        #[arg(long, default_value_t = 200)]
        limit: usize,
        /// Write to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    check_thread_cap()?;
    match Cli::parse().command {
        Command::Gen { users, items, dim, rank, seed, out_users, out_items, format } => {
            let cfg = synth::GenConfig { users, items, dim, rank, seed };
            let (user_set, item_set) = synth::generate(&cfg)?;
            let save = match format {
                Format::Text => io::save_text,
                Format::Binary => io::save_binary,
            };
            save(&out_users, &user_set)?;
            save(&out_items, &item_set)?;
            println!(
                "wrote {} users to {} and {} items to {}",
                users,
                out_users.display(),
                items,
                out_items.display()
            );
            Ok(())
        }
        Command::Preprocess { users, items, out, kmax, dprime, b1, b2, alpha, gamma } => {
            let user_set = io::load_vectors(&users, Role::Users)?;
            let item_set = io::load_vectors(&items, Role::Items)?;
            let config = BuildConfig {
                k_max: kmax,
                split_dim: dprime,
                uniform_budget_factor: b1,
                dynamic_budget_factor: b2,
                alpha,
                gamma,
                ..BuildConfig::default()
            };
            let started = Instant::now();
            let index = build_index(&user_set, &item_set, &config)
                .context("building the index")?;
            let elapsed = started.elapsed().as_secs_f64();
            let stats = index.build_stats();
            if stats.budget_clamped {
                eprintln!("warning: deficit budget curve clamped; scan grants follow the curve limit");
            }
            index_io::save_index(&out, &index)?;
            println!(
                "indexed {} items for {} users in {elapsed:.3}s \
                 (positions {}+{}, products {}, certified {}/{})",
                item_set.count(),
                user_set.count(),
                stats.uniform_positions,
                stats.dynamic_positions,
                stats.exact_products,
                user_set.count() - stats.uncertified_after_dynamic,
                user_set.count()
            );
            Ok(())
        }
        Command::Query { index, k, n, stats } => {
            let mut idx = index_io::load_index(&index)?;
            let started = Instant::now();
            let result = top_n_query(&mut idx, k, n)?;
            let elapsed = started.elapsed().as_secs_f64();
            if result.clamped {
                eprintln!(
                    "warning: requested {n} items, index holds {}; returning all",
                    idx.config().item_count
                );
            }
            print_result_lines(&result.entries);
            if stats {
                println!("items_scored={}", result.stats.scored_items);
                println!("ip_count={}", result.stats.inner_products);
                println!("users_resolved={}", result.stats.users_resolved);
                println!("elapsed={elapsed:.6}");
            }
            Ok(())
        }
        Command::Bench { users, items, k, n, method, kmax, dprime, pruned } => {
            let user_set = io::load_vectors(&users, Role::Users)?;
            let item_set = io::load_vectors(&items, Role::Items)?;
            match method {
                Method::Ours => {
                    let config =
                        BuildConfig { k_max: kmax, split_dim: dprime, ..BuildConfig::default() };
                    let build_start = Instant::now();
                    let mut idx = build_index(&user_set, &item_set, &config)?;
                    let build = build_start.elapsed().as_secs_f64();
                    let query_start = Instant::now();
                    let result = top_n_query(&mut idx, k, n)?;
                    let query = query_start.elapsed().as_secs_f64();
                    print_result_lines(&result.entries);
                    println!(
                        "method=ours build_seconds={build:.6} query_seconds={query:.6} total_seconds={:.6}",
                        build + query
                    );
                }
                Method::Brute => {
                    let mode = if pruned { ScanMode::NormPruned } else { ScanMode::Full };
                    let started = Instant::now();
                    let order = sort_items_by_norm(&item_set);
                    let sorted = item_set.reorder(&order);
                    let table = brute_force_scores(&user_set, &sorted, order, k, mode)?;
                    let top = table.top_n(n);
                    let total = started.elapsed().as_secs_f64();
                    print_result_lines(&top);
                    println!("method=brute total_seconds={total:.6}");
                }
            }
            Ok(())
        }
        Command::ScoreDist { index, k, limit, out } => {
            let mut idx = index_io::load_index(&index)?;
            let m = idx.config().item_count;
            ensure!(limit >= 1, "limit must be at least 1");
            if limit > m {
                bail!("limit {limit} exceeds the index item count {m}");
            }
            let result = top_n_query(&mut idx, k, limit)?;
            let mut rows = String::from("rank,score\n");
            for (rank, (_, score)) in result.entries.iter().enumerate() {
                rows.push_str(&format!("{},{}\n", rank + 1, score));
            }
            match out {
                Some(path) => std::fs::write(&path, rows)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{rows}"),
            }
            Ok(())
        }
    }
}

fn print_result_lines(entries: &[(u32, u32)]) {
    for (rank, (id, score)) in entries.iter().enumerate() {
        println!("{},{id},{score}", rank + 1);
    }
}

fn check_thread_cap() -> Result<()> {
    match std::env::var("RKM_THREADS") {
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| anyhow!("RKM_THREADS must be a positive integer, got {raw:?}"))?;
            ensure!(n >= 1, "RKM_THREADS must be at least 1");
            Ok(())
        }
        Err(_) => Ok(()),
    }
}
