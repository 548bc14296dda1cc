fn main() {
    let code = forkeffect_cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
