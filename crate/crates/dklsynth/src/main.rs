use clap::Parser;
use dklsynth::cli::{run, Cli};
use dklsynth::error::{exit_code, EXIT_OK};

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}
