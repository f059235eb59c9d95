//! Gate-independent noise leaves basis expansion coefficients untouched.

use ptt::basis_design::reference_muub;
use ptt::channels::ChannelChoi;
use ptt::random::{haar_unitary, random_kraus, rng};
use ptt::simulator::inject_gate_noise;

fn main() -> ptt::Result<()> {
    let mut r = rng(5);
    let before = ChannelChoi::from_kraus(&random_kraus(&mut r, 2, 2))?;
    let after = ChannelChoi::from_kraus(&random_kraus(&mut r, 2, 2))?;
    let clean = reference_muub().instrument_basis()?;
    let noisy = inject_gate_noise(&clean, &before, &after)?;
    let u = haar_unitary(&mut r, 2);
    let ideal = clean.expansion(&ChannelChoi::from_unitary(&u));
    let dressed = noisy.expansion(&before.then(&ChannelChoi::from_unitary(&u))?.then(&after)?);
    let gap = ideal.iter().zip(&dressed).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    println!("coefficients {:.4?}", ideal.iter().map(|z| z.re).collect::<Vec<_>>());
    println!("max deviation under noise {gap:.2e}");
    Ok(())
}
