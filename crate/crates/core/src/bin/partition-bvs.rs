fn main() {
    std::process::exit(partition_bvs::cli::run(std::env::args_os()));
}
