//! Load and validate a run configuration the way the command-line tool
//! does, then show the resolved budget and its fingerprint.
//!
//! cargo run --example cli_config [CONFIG.toml]

use lean_collab::cli::RunConfig;

const SAMPLE: &str = r#"
problems_path = "data/minif2f_valid.ndjson"
budget = "8+2x4"
workers = 2
batch_size = 4

[backend]
kind = "http"
endpoint = "http://127.0.0.1:8000/v1/chat/completions"
model = "prover"
context_tokens = 8192

[sampling]
temperature = 0.7
max_new_tokens = 4096

[verifier]
mode = "mock"
"#;

fn main() {
    let config = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(path.as_ref()),
        None => toml::from_str::<RunConfig>(SAMPLE)
            .map_err(|e| lean_collab::cli::CliError::Config(e.to_string())),
    };
    let config = config.unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    });
    let budget = config.validate().unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    });
    let engine = config.prompt.engine().expect("default templates");
    println!("problem set: {}", config.problem_set_id());
    println!(
        "budget: {budget} ({} attempts per theorem at most)",
        budget.per_theorem_cap()
    );
    println!("fingerprint: {}", config.fingerprint(&engine));

    // the same checks report field paths on bad input
    let bad = SAMPLE.replace("temperature = 0.7", "temprature = 0.7");
    if let Err(e) = toml::from_str::<RunConfig>(&bad) {
        println!("\nmisspelled field is rejected:\n{e}");
    }
}
