fn main() { std::process::exit(spinbench::cli::main()); }
