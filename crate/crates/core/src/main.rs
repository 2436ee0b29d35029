fn main() {
    std::process::exit(diet_attn::cli::run(std::env::args_os()));
}
