use clap::Parser;

#[global_allocator]
static ALLOC: vcnef::alloc_track::TrackingAlloc = vcnef::alloc_track::TrackingAlloc;

fn main() {
    vcnef::cli::init_threads();
    let cli = vcnef::cli::Cli::parse();
    if let Err(e) = vcnef::cli::run(cli) {
        eprintln!("vcnef: {e}");
        std::process::exit(1);
    }
}
