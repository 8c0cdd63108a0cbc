use std::fmt;

use super::fixed::Fixed32;
use crate::error::{Error, Result};

pub const INDEX_BITS: u32 = 29;
pub const INDEX_LIMIT: u64 = 1 << INDEX_BITS;
const MODE_SHIFT: u32 = 61;
const INDEX_SHIFT: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    UpdateAlpha = 0,
    UpdateBeta = 1,
    UpdateP = 2,
    UpdateB = 3,
    UpdateInput = 4,
    UpdateFf = 5,
    DoTraining = 6,
    DoPrediction = 7,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::UpdateAlpha,
        Mode::UpdateBeta,
        Mode::UpdateP,
        Mode::UpdateB,
        Mode::UpdateInput,
        Mode::UpdateFf,
        Mode::DoTraining,
        Mode::DoPrediction,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Mode> {
        Mode::ALL.get(usize::from(code)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::UpdateAlpha => "update_alpha",
            Mode::UpdateBeta => "update_beta",
            Mode::UpdateP => "update_p",
            Mode::UpdateB => "update_b",
            Mode::UpdateInput => "update_input",
            Mode::UpdateFf => "update_ff",
            Mode::DoTraining => "do_training",
            Mode::DoPrediction => "do_prediction",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 64-bit input packet: Mode `[63:61]`, Index `[60:32]`, Value `[31:0]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Packet(pub u64);

impl Packet {
    pub fn encode(mode: Mode, index: u64, value: Fixed32) -> Result<Packet> {
        if index >= INDEX_LIMIT {
            return Err(Error::IndexOverflow {
                index,
                limit: INDEX_LIMIT,
            });
        }
        Ok(Packet(
            (u64::from(mode.code()) << MODE_SHIFT) | (index << INDEX_SHIFT) | u64::from(value.to_bits()),
        ))
    }

    pub fn trigger(mode: Mode) -> Packet {
        Packet(u64::from(mode.code()) << MODE_SHIFT)
    }

    pub fn decode(self) -> (Mode, u64, Fixed32) {
        (self.mode(), self.index(), self.value())
    }

    pub fn mode(self) -> Mode {
        Mode::ALL[(self.0 >> MODE_SHIFT) as usize]
    }

    pub fn index(self) -> u64 {
        (self.0 >> INDEX_SHIFT) & (INDEX_LIMIT - 1)
    }

    pub fn value(self) -> Fixed32 {
        Fixed32::from_bits(self.0 as u32)
    }

    pub fn word(self) -> u64 {
        self.0
    }
}

impl fmt::Debug for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Packet({} [{}] = {})", self.mode(), self.index(), self.value())
    }
}

pub fn encode_packet(mode: Mode, index: u64, value: Fixed32) -> Result<Packet> {
    Packet::encode(mode, index, value)
}

pub fn decode_packet(packet: Packet) -> (Mode, u64, Fixed32) {
    packet.decode()
}

/// 32-bit output packet: a Success flag in bit 0 after `do_training`, or a
/// Fixed32 score after `do_prediction`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct OutPacket(pub u32);

impl OutPacket {
    pub fn success(ok: bool) -> OutPacket {
        OutPacket(u32::from(ok))
    }

    pub fn score(value: Fixed32) -> OutPacket {
        OutPacket(value.to_bits())
    }

    pub fn is_success(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn as_score(self) -> Fixed32 {
        Fixed32::from_bits(self.0)
    }

    pub fn word(self) -> u32 {
        self.0
    }
}

impl fmt::Debug for OutPacket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OutPacket({:#010x})", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trigger_word() {
        assert_eq!(Packet::trigger(Mode::DoTraining).word(), 0xC000_0000_0000_0000);
        assert_eq!(Packet::encode(Mode::DoTraining, 0, Fixed32::ZERO).unwrap().word(), 0xC000_0000_0000_0000);
        assert_eq!(Packet::trigger(Mode::DoPrediction).word(), 0xE000_0000_0000_0000);
    }

    #[test]
    fn value_field_of_one() {
        let p = Packet::encode(Mode::UpdateInput, 3, Fixed32::ONE).unwrap();
        assert_eq!(p.word() & 0xFFFF_FFFF, 0x0001_0000);
        assert_eq!(p.word(), (4u64 << 61) | (3u64 << 32) | 0x0001_0000);
    }

    #[test]
    fn negative_value_does_not_leak_into_index() {
        let p = Packet::encode(Mode::UpdateBeta, 7, Fixed32::from_f64(-1.0)).unwrap();
        assert_eq!(p.decode(), (Mode::UpdateBeta, 7, Fixed32::from_f64(-1.0)));
    }

    #[test]
    fn index_overflow() {
        assert!(Packet::encode(Mode::UpdateP, INDEX_LIMIT - 1, Fixed32::ONE).is_ok());
        assert!(matches!(
            Packet::encode(Mode::UpdateP, INDEX_LIMIT, Fixed32::ONE),
            Err(Error::IndexOverflow { index, limit }) if index == INDEX_LIMIT && limit == 1 << 29
        ));
    }

    #[test]
    fn out_packets() {
        assert!(OutPacket::success(true).is_success());
        assert_eq!(OutPacket::success(false).word(), 0);
        let s = Fixed32::from_f64(0.125);
        assert_eq!(OutPacket::score(s).as_score(), s);
    }

    proptest! {
        #[test]
        fn roundtrip_all_modes(code in 0u8..8, index in 0u64..INDEX_LIMIT, raw in any::<i32>()) {
            let mode = Mode::from_code(code).unwrap();
            let v = Fixed32::from_raw(raw);
            let p = encode_packet(mode, index, v).unwrap();
            prop_assert_eq!(decode_packet(p), (mode, index, v));
            prop_assert_eq!(Packet(p.word()), p);
        }

        #[test]
        fn every_word_decodes_and_reencodes(word in any::<u64>()) {
            let (mode, index, value) = Packet(word).decode();
            prop_assert_eq!(encode_packet(mode, index, value).unwrap().word(), word);
        }
    }
}
