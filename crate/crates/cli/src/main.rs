use clap::Parser;
use fet_cli::{run, Cli};

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let out = run(&cli)?;
    println!("{}", out.trim_end());
    Ok(())
}
