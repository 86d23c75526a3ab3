fn main() {
    let code = netcontract::cli::run(std::env::args_os());
    std::process::exit(code);
}
