use std::process::ExitCode;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout().lock();
    match riskmap_cli::run(std::env::args_os(), &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(riskmap_cli::CliError::Usage(e)) => {
            let code = if e.use_stderr() {
                riskmap_cli::EXIT_CONFIG
            } else {
                riskmap_cli::EXIT_OK
            };
            let _ = e.print();
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
