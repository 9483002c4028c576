use clap::Parser;
use footlift_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("footlift: {e}");
        std::process::exit(e.exit_code());
    }
}
