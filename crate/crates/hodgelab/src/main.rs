use clap::Parser;
use hodgelab::cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(exit) = run(cli) {
        if let Some(e) = exit.error {
            eprintln!("error: {e:#}");
        }
        std::process::exit(exit.code);
    }
}
