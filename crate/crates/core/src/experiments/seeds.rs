//! Independent random streams derived from one experiment seed, so results
//! do not depend on thread scheduling.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data,
    Ood,
    Folds,
    FaFit,
    FaTrain,
    FaEval,
    Init,
    Shuffle,
    OodBatch,
    Noise,
    Member(u64),
    Fold(u64),
    Verify(u64),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Data => 1,
            Stream::Ood => 2,
            Stream::Folds => 3,
            Stream::FaFit => 4,
            Stream::FaTrain => 5,
            Stream::FaEval => 6,
            Stream::Init => 7,
            Stream::Shuffle => 8,
            Stream::OodBatch => 9,
            Stream::Noise => 10,
            Stream::Member(i) => 1 << 20 | i,
            Stream::Fold(i) => 2 << 20 | i,
            Stream::Verify(i) => 3 << 20 | i,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, s: Stream) -> u64 {
    splitmix64(splitmix64(seed) ^ s.tag())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        let all = [
            Stream::Data,
            Stream::Ood,
            Stream::Init,
            Stream::Member(0),
            Stream::Member(1),
            Stream::Fold(0),
        ];
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert_ne!(stream(5, *a), stream(5, *b));
            }
        }
        assert_ne!(stream(5, Stream::Data), stream(6, Stream::Data));
        assert_eq!(stream(5, Stream::Data), stream(5, Stream::Data));
    }
}
