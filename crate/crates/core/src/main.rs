fn main() {
    let code = apc_detect::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
