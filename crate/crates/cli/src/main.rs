use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use mlz_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version exit cleanly; anything else is usage.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let started = Instant::now();
    let result = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("cannot write report: {e}");
            return ExitCode::from(1);
        }
    };
    print!("{}", result.output);
    let _ = writeln!(
        std::io::stderr(),
        "# time {:.3} s",
        started.elapsed().as_secs_f64()
    );
    ExitCode::from(u8::try_from(result.code).unwrap_or(1))
}
