fn main() {
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = arcrec_cli::run(std::env::args_os(), &mut stdout) {
        eprintln!("arcrec: {e}");
        std::process::exit(e.exit_code());
    }
}
