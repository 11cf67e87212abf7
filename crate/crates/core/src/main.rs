fn main() {
    std::process::exit(spatial_dit::cli::run(std::env::args_os()));
}
