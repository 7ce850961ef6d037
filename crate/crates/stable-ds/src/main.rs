use std::io::{self, Write};

fn main() {
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut stderr = io::stderr();
    let code = stable_ds::cli::run(std::env::args_os(), &mut stdin.lock(), &mut stdout.lock(), &mut stderr);
    let _ = stderr.flush();
    std::process::exit(code);
}
