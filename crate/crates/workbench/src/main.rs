use clap::Parser;

fn main() -> anyhow::Result<()> {
    tsattn_workbench::cli::run(tsattn_workbench::cli::Cli::parse())
}
