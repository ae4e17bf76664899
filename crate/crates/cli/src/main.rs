use clap::Parser;

fn main() {
    let cli = dlimd_cli::Cli::parse();
    if let Err(e) = dlimd_cli::run(cli) {
        let msg = format!("{e:#}").replace('\n', " ");
        eprintln!("dlimd: {msg}");
        std::process::exit(1);
    }
}
