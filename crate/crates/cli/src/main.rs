fn main() { std::process::exit(gonodyn_cli::run(std::env::args_os())) }
