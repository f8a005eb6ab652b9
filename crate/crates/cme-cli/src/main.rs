fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(cme_cli::run(&args));
}
