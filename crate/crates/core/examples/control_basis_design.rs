//! Approximately mutually unbiased unitary bases: the tabulated reference
//! basis and a fresh numerical search.

use ptt::basis_design::{muub_search, reference_muub};

fn main() {
    let reference = reference_muub();
    println!("reference objective {:.5}, superoperator rank {}", reference.objective(), reference.superoperator_rank());
    println!("reference per-element averages {:.5?}", reference.average_overlaps());
    let search = muub_search(10, 4, 4);
    println!("search objective {:.5} (restarts {:.5?})", search.objective, search.restart_objectives);
    println!("search per-element averages {:.5?}", search.basis.average_overlaps());
}
